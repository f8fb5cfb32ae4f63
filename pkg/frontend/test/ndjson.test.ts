import { describe, expect, it } from "vitest";
import { NdjsonParser } from "../src/ndjson.js";

function collect(): { objs: unknown[]; bad: string[]; parser: NdjsonParser } {
  const objs: unknown[] = [];
  const bad: string[] = [];
  const parser = new NdjsonParser(
    (o) => objs.push(o),
    (line) => bad.push(line),
  );
  return { objs, bad, parser };
}

describe("NdjsonParser", () => {
  it("parses one object per line", () => {
    const { objs, parser } = collect();
    parser.feed('{"a":1}\n{"a":2}\n');
    expect(objs).toEqual([{ a: 1 }, { a: 2 }]);
  });

  it("carries partial lines across feeds", () => {
    const { objs, parser } = collect();
    parser.feed('{"value":');
    parser.feed("42");
    expect(objs).toEqual([]);
    parser.feed("}\n");
    expect(objs).toEqual([{ value: 42 }]);
  });

  it("handles several lines in one chunk and blank lines", () => {
    const { objs, parser } = collect();
    parser.feed('\n{"a":1}\n\n{"b":2}\n   \n');
    expect(objs).toEqual([{ a: 1 }, { b: 2 }]);
  });

  it("reports unparseable lines and keeps going", () => {
    const { objs, bad, parser } = collect();
    parser.feed('{"ok":true}\nnot json\n{"ok":false}\n');
    expect(objs).toEqual([{ ok: true }, { ok: false }]);
    expect(bad).toEqual(["not json"]);
  });

  it("flush parses a trailing unterminated line", () => {
    const { objs, parser } = collect();
    parser.feed('{"tail":1}');
    expect(objs).toEqual([]);
    parser.flush();
    expect(objs).toEqual([{ tail: 1 }]);
    parser.flush(); // idempotent
    expect(objs).toEqual([{ tail: 1 }]);
  });
});
