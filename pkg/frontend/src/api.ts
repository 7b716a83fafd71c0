/** Typed client for the annotation service's JSON API.
 *
 * Every response field comes straight from the server; nothing is
 * synthesized client-side. Non-2xx responses raise ApiError with the
 * status code and the server's detail message so callers can branch on
 * conflicts (409) versus transport failures.
 */

export interface SampleView {
  id: string;
  features: number[];
}

export interface PairPayload {
  pair_id: string;
  left: SampleView;
  right: SampleView;
  round: number;
  position: number;
  total: number;
}

export interface Status {
  pending: number;
  answered: number;
  round: number;
  iterations_done: number;
  total_iterations: number;
  labeled_count: number;
  labeling_ratio: number;
  done: boolean;
}

export interface SubmitAck {
  pair_id: string;
  remaining: number;
}

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
    this.name = "ApiError";
  }
}

const TOKEN_HEADER = "x-annotation-token";

export class AnnotationApi {
  constructor(
    private readonly base: string = "",
    private readonly token: string | null = null,
  ) {}

  private async request<T>(path: string, init: RequestInit = {}): Promise<T> {
    const headers: Record<string, string> = {
      ...(init.headers as Record<string, string> | undefined),
    };
    if (this.token !== null) {
      headers[TOKEN_HEADER] = this.token;
    }
    const response = await fetch(this.base + path, { ...init, headers });
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const body = await response.json();
        if (typeof body.detail === "string") {
          detail = body.detail;
        }
      } catch {
        // non-JSON error body: keep the status text
      }
      throw new ApiError(response.status, detail);
    }
    return response.json() as Promise<T>;
  }

  nextPairs(limit = 1): Promise<PairPayload[]> {
    return this.request(`/pairs?limit=${limit}`);
  }

  submitLabel(pairId: string, label: number, annotator = "ui"): Promise<SubmitAck> {
    return this.request(`/pairs/${encodeURIComponent(pairId)}/label`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ label, annotator }),
    });
  }

  status(): Promise<Status> {
    return this.request("/status");
  }

  advance(): Promise<Status> {
    return this.request("/rounds/advance", { method: "POST" });
  }
}
