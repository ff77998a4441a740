/**
 * Scan viewer: the page the engine is currently looking at, with zoom,
 * pan, and previous/next controls, plus a table of extracted rows when
 * the engine attached one.
 */

import { ApiClient, ViewerState } from "./api.js";

export class PageView {
  private img: HTMLImageElement;
  private placeholder: HTMLElement;
  private table: HTMLElement;
  private label: HTMLElement;
  private scale = 1;
  private panX = 0;
  private panY = 0;
  private source: string | null = null;
  private pageId: number | null = null;

  constructor(
    private root: HTMLElement,
    private api: ApiClient,
    private pageCount = Infinity,
  ) {
    root.innerHTML = `
      <div class="pv-toolbar">
        <button data-act="prev" title="previous page">&#8592;</button>
        <span class="pv-label"></span>
        <button data-act="next" title="next page">&#8594;</button>
        <button data-act="zoom-in">+</button>
        <button data-act="zoom-out">&#8722;</button>
        <button data-act="reset">reset</button>
      </div>
      <div class="pv-stage">
        <img class="pv-image" alt="source page" draggable="false">
        <div class="pv-placeholder" hidden></div>
      </div>
      <div class="pv-attachment"></div>`;
    this.img = root.querySelector(".pv-image") as HTMLImageElement;
    this.placeholder = root.querySelector(".pv-placeholder") as HTMLElement;
    this.table = root.querySelector(".pv-attachment") as HTMLElement;
    this.label = root.querySelector(".pv-label") as HTMLElement;

    this.img.onerror = () => this.showPlaceholder();
    root.querySelectorAll("button").forEach((btn) => {
      btn.addEventListener("click", () => this.onAction(btn.dataset.act ?? ""));
    });
    this.bindPan();
  }

  /** Mirror a server-pushed viewer state: image, label, attachment table. */
  applyState(state: ViewerState): void {
    if (state.source === null || state.page_id === null) {
      this.label.textContent = "no page open";
      this.img.removeAttribute("src");
      this.table.innerHTML = "";
      return;
    }
    this.showPage(state.source, state.page_id);
    this.renderAttachment(state.attachment ?? null);
  }

  showPage(source: string, pageId: number): void {
    this.source = source;
    this.pageId = pageId;
    this.placeholder.hidden = true;
    this.img.hidden = false;
    this.img.src = this.api.imageUrl(source, pageId);
    this.label.textContent = `${source} · page ${pageId}`;
    this.resetTransform();
  }

  get currentPage(): number | null {
    return this.pageId;
  }

  private renderAttachment(rows: string[][] | null): void {
    this.table.innerHTML = "";
    if (!rows || rows.length === 0) return;
    const table = document.createElement("table");
    const [header, ...data] = rows;
    const thead = document.createElement("thead");
    const headRow = document.createElement("tr");
    for (const cell of header) {
      const th = document.createElement("th");
      th.textContent = cell;
      headRow.appendChild(th);
    }
    thead.appendChild(headRow);
    table.appendChild(thead);
    const tbody = document.createElement("tbody");
    for (const row of data) {
      const tr = document.createElement("tr");
      for (const cell of row) {
        const td = document.createElement("td");
        td.textContent = cell;
        tr.appendChild(td);
      }
      tbody.appendChild(tr);
    }
    table.appendChild(tbody);
    this.table.appendChild(table);
  }

  private showPlaceholder(): void {
    this.img.hidden = true;
    this.placeholder.hidden = false;
    this.placeholder.textContent =
      `page ${this.pageId ?? "?"} could not be loaded`;
  }

  private onAction(act: string): void {
    switch (act) {
      case "prev":
        if (this.source && this.pageId !== null && this.pageId > 1) {
          this.showPage(this.source, this.pageId - 1);
          this.renderAttachment(null);
        }
        break;
      case "next":
        if (this.source && this.pageId !== null && this.pageId < this.pageCount) {
          this.showPage(this.source, this.pageId + 1);
          this.renderAttachment(null);
        }
        break;
      case "zoom-in":
        this.scale = Math.min(this.scale * 1.25, 8);
        this.applyTransform();
        break;
      case "zoom-out":
        this.scale = Math.max(this.scale / 1.25, 0.25);
        this.applyTransform();
        break;
      case "reset":
        this.resetTransform();
        break;
    }
  }

  private bindPan(): void {
    let dragging = false;
    let lastX = 0;
    let lastY = 0;
    this.img.addEventListener("pointerdown", (ev) => {
      dragging = true;
      lastX = ev.clientX;
      lastY = ev.clientY;
    });
    this.root.addEventListener("pointermove", (ev) => {
      if (!dragging) return;
      this.panX += ev.clientX - lastX;
      this.panY += ev.clientY - lastY;
      lastX = ev.clientX;
      lastY = ev.clientY;
      this.applyTransform();
    });
    this.root.addEventListener("pointerup", () => {
      dragging = false;
    });
  }

  private resetTransform(): void {
    this.scale = 1;
    this.panX = 0;
    this.panY = 0;
    this.applyTransform();
  }

  private applyTransform(): void {
    this.img.style.transform =
      `translate(${this.panX}px, ${this.panY}px) scale(${this.scale})`;
  }
}
