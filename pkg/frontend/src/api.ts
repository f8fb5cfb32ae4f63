import type {
  CheckAllResult,
  ControlResponse,
  DeviceId,
  InstructionBody,
  PanelModel,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
  }
}

export class PanelApi {
  constructor(
    private readonly base: string = "",
    private readonly fetchFn: typeof fetch = (...args) => fetch(...args),
  ) {}

  panel(): Promise<PanelModel> {
    return this.req("GET", "/api/panel");
  }

  submitControl(id: DeviceId, body: InstructionBody): Promise<ControlResponse> {
    const path = `/api/devices/${encodeURIComponent(id.fog_id)}/${encodeURIComponent(id.device_id)}/control`;
    return this.req("POST", path, body);
  }

  async checkAll(): Promise<CheckAllResult[]> {
    const resp: { results: CheckAllResult[] } = await this.req(
      "POST",
      "/api/actuators/check-all",
      {},
    );
    return resp.results;
  }

  private async req<T>(method: string, path: string, body?: unknown): Promise<T> {
    const resp = await this.fetchFn(this.base + path, {
      method,
      headers: body === undefined ? undefined : { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!resp.ok) {
      let message = `HTTP ${resp.status}`;
      try {
        const doc = await resp.json();
        if (doc && typeof doc.error === "string") message = doc.error;
      } catch {
        // non-JSON error body; keep the status line
      }
      throw new ApiError(resp.status, message);
    }
    return (await resp.json()) as T;
  }
}
