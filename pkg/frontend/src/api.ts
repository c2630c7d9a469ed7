/** Thin client over the serve API; fetch is injectable for tests. */

import type {
  AttributeResponse,
  Bundle,
  BundlePoll,
  RegionsResponse,
  SessionResponse,
  WhatIfResponse,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export class ApiClient {
  constructor(
    private readonly base: string = "",
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(this.base + path, init);
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const body = await response.json();
        detail = body.detail ?? body.error ?? detail;
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  private post<T>(path: string, payload: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(payload),
    });
  }

  health(): Promise<{ status: string }> {
    return this.request("/api/health");
  }

  createSession(imageB64: string, prompt: string): Promise<SessionResponse> {
    return this.post("/api/session", { image_b64: imageB64, prompt });
  }

  /** Rehydrate an existing session (shareable URL restore). */
  getSession(sessionId: string): Promise<SessionResponse> {
    return this.request(`/api/session/${sessionId}`);
  }

  requestAttribution(sessionId: string, positions: number[]): Promise<AttributeResponse> {
    return this.post("/api/attribute", { session_id: sessionId, positions });
  }

  pollBundle(bundleId: string): Promise<BundlePoll> {
    return this.request(`/api/bundle/${bundleId}`);
  }

  async waitForBundle(
    bundleId: string,
    intervalMs = 250,
    timeoutMs = 120_000,
  ): Promise<Bundle> {
    const deadline = Date.now() + timeoutMs;
    for (;;) {
      const poll = await this.pollBundle(bundleId);
      if (poll.status === "done") return poll.bundle;
      if (poll.status === "error") throw new ApiError(500, poll.error);
      if (Date.now() > deadline) throw new ApiError(408, "attribution timed out");
      await new Promise((resolve) => setTimeout(resolve, intervalMs));
    }
  }

  whatIf(
    sessionId: string,
    removedRegionIds: number[],
    positions?: number[],
  ): Promise<WhatIfResponse> {
    return this.post("/api/whatif", {
      session_id: sessionId,
      removed_region_ids: removedRegionIds,
      ...(positions === undefined ? {} : { positions }),
    });
  }

  regions(sessionId: string): Promise<RegionsResponse> {
    return this.request(`/api/session/${sessionId}/regions`);
  }

  saliencyUrl(bundleId: string): string {
    return `${this.base}/api/saliency/${bundleId}.png`;
  }

  sessionImageUrl(sessionId: string): string {
    return `${this.base}/api/session/${sessionId}/image.png`;
  }
}
