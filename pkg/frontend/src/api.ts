/**
 * Typed client for the gateway HTTP/WS API. All state changes go through the
 * documented routes; every call is appended to an audit log so tests (and
 * bug reports) can replay the exact request order.
 */

import type {
  ConditionPayload,
  GatewayEvent,
  PoseJson,
  ProposeResponse,
  SessionSummary,
} from "./types.js";

export class GatewayError extends Error {
  readonly code: string;
  readonly status: number;

  constructor(code: string, message: string, status: number) {
    super(message);
    this.code = code;
    this.status = status;
  }
}

export interface ProposeArgs {
  pose: PoseJson;
  prompt: string;
  seed: number;
  selection_box?: [number, number, number, number];
  conditions?: ConditionPayload[];
}

export interface RequestLogEntry {
  method: string;
  path: string;
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

interface EventSocket {
  close(): void;
}

type SocketFactory = (url: string, onEvent: (ev: GatewayEvent) => void, onError: () => void) => EventSocket;

const defaultSocketFactory: SocketFactory = (url, onEvent, onError) => {
  const ws = new WebSocket(url);
  ws.onmessage = (msg) => onEvent(JSON.parse(String(msg.data)) as GatewayEvent);
  ws.onerror = () => onError();
  return { close: () => ws.close() };
};

export class GatewayClient {
  readonly baseUrl: string;
  readonly requestLog: RequestLogEntry[] = [];
  private readonly fetchImpl: FetchLike;
  private readonly socketFactory: SocketFactory;

  constructor(
    baseUrl: string,
    fetchImpl: FetchLike = (url, init) => fetch(url, init),
    socketFactory: SocketFactory = defaultSocketFactory,
  ) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
    this.fetchImpl = fetchImpl;
    this.socketFactory = socketFactory;
  }

  private async request(method: string, path: string, body?: unknown): Promise<Response> {
    this.requestLog.push({ method, path });
    let response: Response;
    try {
      response = await this.fetchImpl(this.baseUrl + path, {
        method,
        headers: body === undefined ? undefined : { "Content-Type": "application/json" },
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (err) {
      throw new GatewayError("gateway_unreachable", String(err), 0);
    }
    if (!response.ok) {
      let code = "http_error";
      let message = `${response.status}`;
      try {
        const doc = (await response.json()) as { code?: string; message?: string };
        code = doc.code ?? code;
        message = doc.message ?? message;
      } catch {
        // non-JSON error body; keep defaults
      }
      throw new GatewayError(code, message, response.status);
    }
    return response;
  }

  private async json<T>(method: string, path: string, body?: unknown): Promise<T> {
    return (await this.request(method, path, body)).json() as Promise<T>;
  }

  async health(): Promise<boolean> {
    try {
      const doc = await this.json<{ status: string }>("GET", "/healthz");
      return doc.status === "ok";
    } catch {
      return false;
    }
  }

  async createSession(config: Record<string, unknown>, first?: Record<string, unknown>,
                      firstPose?: PoseJson): Promise<{ id: string; summary: SessionSummary }> {
    return this.json("POST", "/sessions", {
      config,
      first,
      first_pose: firstPose,
    });
  }

  async summary(id: string): Promise<SessionSummary> {
    return this.json("GET", `/sessions/${id}`);
  }

  /** Rendered composite at a pose; returns PNG bytes + coverage fraction. */
  async render(id: string, pose: PoseJson): Promise<{ png: ArrayBuffer; coverage: number }> {
    const response = await this.request("POST", `/sessions/${id}/render`, { pose });
    const coverage = Number(response.headers.get("X-Mask-Coverage") ?? "0");
    return { png: await response.arrayBuffer(), coverage };
  }

  async propose(id: string, args: ProposeArgs): Promise<ProposeResponse> {
    return this.json("POST", `/sessions/${id}/propose`, args);
  }

  async commit(id: string): Promise<SessionSummary> {
    return this.json("POST", `/sessions/${id}/commit`);
  }

  async reject(id: string): Promise<SessionSummary> {
    return this.json("POST", `/sessions/${id}/reject`);
  }

  async undo(id: string): Promise<SessionSummary> {
    return this.json("POST", `/sessions/${id}/undo`);
  }

  exportUrl(id: string, what: "ply" | "frames" | "trajectory"): string {
    return `${this.baseUrl}/sessions/${id}/export?what=${what}`;
  }

  /** Subscribe to the session event stream; returns a handle with close(). */
  subscribe(id: string, onEvent: (ev: GatewayEvent) => void,
            onError: () => void = () => undefined): EventSocket {
    const wsBase = this.baseUrl.replace(/^http/, "ws");
    return this.socketFactory(`${wsBase}/sessions/${id}/events`, onEvent, onError);
  }
}
