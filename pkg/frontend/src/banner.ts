/**
 * Boundary confirmation banner.
 *
 * When the recorded section range has not been verified by the user, the
 * banner offers jump-to-start and jump-to-end (so the boundary pages can
 * be eyeballed in the viewer) and a Confirm button that records the
 * verification on the server.
 */

import { ApiClient, RangeRecord } from "./api.js";

export class RangeBanner {
  private range: RangeRecord | null = null;
  private confirming = false;

  constructor(
    private root: HTMLElement,
    private api: ApiClient,
    private source: string,
    private jumpTo: (pageId: number) => void,
  ) {
    root.hidden = true;
  }

  async refresh(): Promise<void> {
    try {
      this.range = await this.api.range(this.source);
    } catch {
      this.range = null; // no range on record yet
    }
    this.render();
  }

  private render(): void {
    const r = this.range;
    if (!r || r.verified_by_user) {
      this.root.hidden = true;
      this.root.innerHTML = "";
      return;
    }
    this.root.hidden = false;
    this.root.innerHTML = `
      <span class="rb-text">
        Section "${r.section}" found at pages ${r.start_page_id}–${r.end_page_id}
        (via ${r.method}). Please verify the boundaries.
      </span>
      <button class="rb-start">Jump to start</button>
      <button class="rb-end">Jump to end</button>
      <button class="rb-confirm">Confirm</button>`;
    (this.root.querySelector(".rb-start") as HTMLElement).addEventListener(
      "click", () => this.jumpTo(r.start_page_id));
    (this.root.querySelector(".rb-end") as HTMLElement).addEventListener(
      "click", () => this.jumpTo(r.end_page_id));
    (this.root.querySelector(".rb-confirm") as HTMLElement).addEventListener(
      "click", () => void this.confirm());
  }

  async confirm(): Promise<void> {
    if (this.confirming) return; // one POST per confirmation
    this.confirming = true;
    try {
      this.range = await this.api.confirmRange(this.source);
      this.render();
    } finally {
      this.confirming = false;
    }
  }
}
