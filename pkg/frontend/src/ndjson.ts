/**
 * Incremental splitter for newline-delimited JSON arriving in arbitrary
 * chunks. Carries a partial trailing line between feeds; a line that fails
 * to parse is surfaced to `onError` and skipped rather than killing the
 * stream.
 */
export class NdjsonParser {
  private buffer = "";

  constructor(
    private readonly onObject: (obj: unknown) => void,
    private readonly onError: (line: string, err: unknown) => void = () => {},
  ) {}

  feed(chunk: string): void {
    this.buffer += chunk;
    let nl: number;
    while ((nl = this.buffer.indexOf("\n")) >= 0) {
      const line = this.buffer.slice(0, nl).trim();
      this.buffer = this.buffer.slice(nl + 1);
      if (!line) continue;
      try {
        this.onObject(JSON.parse(line));
      } catch (err) {
        this.onError(line, err);
      }
    }
  }

  /** Parse whatever is left (stream closed without a final newline). */
  flush(): void {
    const line = this.buffer.trim();
    this.buffer = "";
    if (!line) return;
    try {
      this.onObject(JSON.parse(line));
    } catch (err) {
      this.onError(line, err);
    }
  }
}
