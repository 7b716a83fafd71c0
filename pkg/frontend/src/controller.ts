/** Screen-agnostic session logic: queue display, submission, advancement.
 *
 * The controller owns exactly one pending pair at a time, always the head
 * of the server queue, so the display order is the server order. A
 * submission in flight blocks further submissions (double-press guard);
 * a transport failure keeps the current pair so the same answer can be
 * retried without loss; a 409 conflict skips forward with a notice since
 * the service is the arbiter.
 */

import { ApiError, PairPayload, Status, SubmitAck } from "./api.js";
import { Choice, labelFor } from "./choices.js";

/** The slice of the HTTP client the controller needs; AnnotationApi
 * satisfies it, and tests substitute stubs. */
export interface Api {
  nextPairs(limit?: number): Promise<PairPayload[]>;
  submitLabel(pairId: string, label: number, annotator?: string): Promise<SubmitAck>;
  status(): Promise<Status>;
  advance(): Promise<Status>;
}

export interface Screen {
  showPair(pair: PairPayload, status: Status): void;
  showRoundComplete(status: Status): void;
  showDone(status: Status): void;
  showBanner(message: string): void;
  clearBanner(): void;
}

export class Controller {
  private current: PairPayload | null = null;
  private submitting = false;

  constructor(
    private readonly api: Api,
    private readonly screen: Screen,
  ) {}

  get currentPair(): PairPayload | null {
    return this.current;
  }

  async refresh(): Promise<void> {
    let status: Status;
    try {
      status = await this.api.status();
    } catch (err) {
      this.screen.showBanner(`service unreachable (${describe(err)}), retry shortly`);
      return;
    }
    if (status.done) {
      this.current = null;
      this.screen.showDone(status);
      return;
    }
    if (status.pending === 0) {
      this.current = null;
      this.screen.showRoundComplete(status);
      return;
    }
    let pairs: PairPayload[];
    try {
      pairs = await this.api.nextPairs(1);
    } catch (err) {
      this.screen.showBanner(`service unreachable (${describe(err)}), retry shortly`);
      return;
    }
    this.current = pairs[0] ?? null;
    if (this.current !== null) {
      this.screen.showPair(this.current, status);
    }
  }

  async choose(choice: Choice): Promise<void> {
    if (this.current === null || this.submitting) {
      return;
    }
    const pair = this.current;
    this.submitting = true;
    try {
      await this.api.submitLabel(pair.pair_id, labelFor(choice));
      this.screen.clearBanner();
      this.current = null;
      await this.refresh();
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        this.screen.showBanner(`pair ${pair.pair_id} was already answered elsewhere, skipping`);
        this.current = null;
        await this.refresh();
      } else {
        // keep the pair: the same answer can be resubmitted once the
        // connection recovers
        this.screen.showBanner(`submit failed (${describe(err)}), choose again to retry`);
      }
    } finally {
      this.submitting = false;
    }
  }

  async advanceRound(): Promise<void> {
    try {
      await this.api.advance();
      this.screen.clearBanner();
    } catch (err) {
      if (err instanceof ApiError) {
        this.screen.showBanner(`cannot advance: ${err.detail}`);
      } else {
        this.screen.showBanner(`service unreachable (${describe(err)}), retry shortly`);
      }
    }
    await this.refresh();
  }
}

function describe(err: unknown): string {
  return err instanceof Error ? err.message : String(err);
}
