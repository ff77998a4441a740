/**
 * Approval console: pending batch requests with their page range, route
 * justification, and cost; Grant/Deny post the decision exactly once.
 * Decided requests move to a history pane; running jobs show a live
 * progress counter fed by the event stream.
 */

import { ApiClient, ApiError, Approval, JobProgress } from "./api.js";

export class ApprovalConsole {
  private pendingPane: HTMLElement;
  private historyPane: HTMLElement;
  private progressPane: HTMLElement;
  private toastEl: HTMLElement;
  private approvals: Approval[] = [];
  private progress = new Map<string, JobProgress>();
  private inFlight = new Set<string>();

  constructor(
    root: HTMLElement,
    private api: ApiClient,
  ) {
    root.innerHTML = `
      <h2>Approvals</h2>
      <div class="ac-toast" hidden></div>
      <div class="ac-pending"></div>
      <h3>Progress</h3>
      <div class="ac-progress"></div>
      <h3>History</h3>
      <div class="ac-history"></div>`;
    this.pendingPane = root.querySelector(".ac-pending") as HTMLElement;
    this.historyPane = root.querySelector(".ac-history") as HTMLElement;
    this.progressPane = root.querySelector(".ac-progress") as HTMLElement;
    this.toastEl = root.querySelector(".ac-toast") as HTMLElement;
  }

  async refresh(): Promise<void> {
    this.approvals = await this.api.approvals();
    this.render();
  }

  /** Route a stream event into the console. */
  handleEvent(kind: string, payload: Record<string, unknown>): void {
    if (kind === "approval") {
      const incoming = payload as unknown as Approval;
      const i = this.approvals.findIndex((a) => a.id === incoming.id);
      if (i >= 0) this.approvals[i] = incoming;
      else this.approvals.push(incoming);
      this.render();
    } else if (kind === "progress") {
      const p = payload as unknown as JobProgress;
      this.progress.set(p.job_id, p);
      this.renderProgress();
    }
  }

  async decide(approvalId: string, decision: "granted" | "denied"): Promise<void> {
    if (this.inFlight.has(approvalId)) return; // one POST per decision
    this.inFlight.add(approvalId);
    try {
      const updated = await this.api.decide(approvalId, decision);
      this.handleEvent("approval", updated as unknown as Record<string, unknown>);
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        this.toast("already decided elsewhere; refreshing");
        await this.refresh();
      } else {
        this.toast(err instanceof Error ? err.message : String(err));
      }
    } finally {
      this.inFlight.delete(approvalId);
    }
  }

  private render(): void {
    this.pendingPane.innerHTML = "";
    this.historyPane.innerHTML = "";
    for (const approval of this.approvals) {
      const card = this.card(approval);
      if (approval.decision === "pending") this.pendingPane.appendChild(card);
      else this.historyPane.appendChild(card);
    }
    this.renderProgress();
  }

  private card(approval: Approval): HTMLElement {
    const el = document.createElement("div");
    el.className = `ac-card ac-${approval.decision}`;
    el.dataset.approvalId = approval.id;
    const s = approval.summary;
    const cost = s.estimate ? s.estimate.total_cost.toFixed(4) : "?";
    el.innerHTML = `
      <div class="ac-pages">pages ${s.pages.replace("-", "–")}</div>
      <div class="ac-route">${s.route}</div>
      <div class="ac-justification">${s.justification}</div>
      <div class="ac-cost">estimated cost ${cost}</div>
      <div class="ac-decision">${approval.decision}${approval.note ? `: ${approval.note}` : ""}</div>`;
    if (approval.decision === "pending") {
      const grant = document.createElement("button");
      grant.textContent = "Grant";
      grant.className = "ac-grant";
      grant.addEventListener("click", () => void this.decide(approval.id, "granted"));
      const deny = document.createElement("button");
      deny.textContent = "Deny";
      deny.className = "ac-deny";
      deny.addEventListener("click", () => void this.decide(approval.id, "denied"));
      el.append(grant, deny);
    }
    return el;
  }

  private renderProgress(): void {
    this.progressPane.innerHTML = "";
    for (const p of this.progress.values()) {
      const row = document.createElement("div");
      row.className = "ac-progress-row";
      row.dataset.jobId = p.job_id;
      const failed = Object.keys(p.failures).length;
      row.textContent =
        `${p.job_id}: ${p.done_pages}/${p.total_pages} (${p.status})` +
        (failed ? `, ${failed} failed` : "");
      this.progressPane.appendChild(row);
    }
  }

  private toast(message: string): void {
    this.toastEl.textContent = message;
    this.toastEl.hidden = false;
    setTimeout(() => {
      this.toastEl.hidden = true;
    }, 4000);
  }
}
