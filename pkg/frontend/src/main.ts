/** Browser bootstrap: wires the controller to the page and the keyboard. */

import { AnnotationApi, PairPayload, Status } from "./api.js";
import { choiceForKey } from "./choices.js";
import { Controller, Screen } from "./controller.js";
import { barGlyph, sharedScale } from "./glyph.js";

function element<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) {
    throw new Error(`missing #${id} in the page`);
  }
  return node as T;
}

class DomScreen implements Screen {
  private readonly pairSection = element<HTMLElement>("pair-section");
  private readonly completeSection = element<HTMLElement>("complete-section");
  private readonly doneSection = element<HTMLElement>("done-section");
  private readonly leftTitle = element<HTMLElement>("left-title");
  private readonly rightTitle = element<HTMLElement>("right-title");
  private readonly leftGlyph = element<HTMLElement>("left-glyph");
  private readonly rightGlyph = element<HTMLElement>("right-glyph");
  private readonly queuePosition = element<HTMLElement>("queue-position");
  private readonly progress = element<HTMLElement>("progress");
  private readonly roundInfo = element<HTMLElement>("round-info");
  private readonly banner = element<HTMLElement>("banner");

  showPair(pair: PairPayload, status: Status): void {
    this.show(this.pairSection);
    this.leftTitle.textContent = pair.left.id;
    this.rightTitle.textContent = pair.right.id;
    const scale = sharedScale(pair.left.features, pair.right.features);
    this.leftGlyph.innerHTML = barGlyph(pair.left.features, scale);
    this.rightGlyph.innerHTML = barGlyph(pair.right.features, scale);
    this.queuePosition.textContent = `pair ${pair.position + 1} of ${pair.total}`;
    this.renderStatus(status);
  }

  showRoundComplete(status: Status): void {
    this.show(this.completeSection);
    this.renderStatus(status);
  }

  showDone(status: Status): void {
    this.show(this.doneSection);
    this.renderStatus(status);
  }

  showBanner(message: string): void {
    this.banner.textContent = message;
    this.banner.classList.remove("hidden");
  }

  clearBanner(): void {
    this.banner.textContent = "";
    this.banner.classList.add("hidden");
  }

  private show(section: HTMLElement): void {
    for (const candidate of [this.pairSection, this.completeSection, this.doneSection]) {
      candidate.classList.toggle("hidden", candidate !== section);
    }
  }

  private renderStatus(status: Status): void {
    const total = status.answered + status.pending;
    this.progress.textContent = `${status.answered}/${total} answered`;
    this.roundInfo.textContent =
      `round ${status.round} - iteration ${status.iterations_done} of ` +
      `${status.total_iterations} - ${status.labeled_count} ids labeled ` +
      `(${status.labeling_ratio.toFixed(1)}%)`;
  }
}

function start(): void {
  const token = new URLSearchParams(window.location.search).get("token");
  const api = new AnnotationApi("", token);
  const controller = new Controller(api, new DomScreen());

  element<HTMLButtonElement>("choose-left").onclick = () => void controller.choose("left");
  element<HTMLButtonElement>("choose-equal").onclick = () => void controller.choose("equal");
  element<HTMLButtonElement>("choose-right").onclick = () => void controller.choose("right");
  element<HTMLButtonElement>("advance").onclick = () => void controller.advanceRound();
  element<HTMLButtonElement>("reload").onclick = () => void controller.refresh();

  document.addEventListener("keydown", (event: KeyboardEvent) => {
    const choice = choiceForKey(event.key);
    if (choice !== null) {
      event.preventDefault();
      void controller.choose(choice);
    }
  });

  void controller.refresh();
}

start();
