import { beforeEach, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { EventStream } from "../src/events.js";
import { PageView } from "../src/pageview.js";
import { RangeBanner } from "../src/banner.js";
import { RecordedServer } from "./recorded.js";

function setup() {
  const server = new RecordedServer();
  const client = new ApiClient("", server.fetch);
  const root = document.createElement("div");
  document.body.appendChild(root);
  const view = new PageView(root, client, 200);
  return { server, client, root, view };
}

beforeEach(() => {
  document.body.innerHTML = "";
});

describe("page view", () => {
  it("shows the pushed page within one state event", () => {
    const { root, view } = setup();
    view.applyState({ source: "book1", page_id: 37, updated_at: "t0" });
    const img = root.querySelector(".pv-image") as HTMLImageElement;
    expect(img.getAttribute("src")).toBe("/api/sources/book1/pages/37/image");
    expect(root.querySelector(".pv-label")?.textContent).toContain("page 37");
  });

  it("renders attachment rows as a table beside the scan", () => {
    const { root, view } = setup();
    view.applyState({
      source: "book1",
      page_id: 52,
      updated_at: "t0",
      attachment: [
        ["Name", "Beruf", "Strasse", "Hausnummer"],
        ["Müller, A.", "Kaufmann", "Marktſtraße", "7"],
        ["Groß, B.", "Bäcker", "Kirchgaſſe", "12"],
      ],
    });
    const rows = root.querySelectorAll(".pv-attachment tbody tr");
    expect(rows).toHaveLength(2);
    expect(root.querySelectorAll(".pv-attachment th")).toHaveLength(4);
    expect(rows[0].textContent).toContain("Marktſtraße");
  });

  it("steps with previous and next controls inside the source", () => {
    const { root, view } = setup();
    view.applyState({ source: "book1", page_id: 37, updated_at: "t0" });
    (root.querySelector("[data-act=next]") as HTMLButtonElement).click();
    expect(view.currentPage).toBe(38);
    (root.querySelector("[data-act=prev]") as HTMLButtonElement).click();
    (root.querySelector("[data-act=prev]") as HTMLButtonElement).click();
    expect(view.currentPage).toBe(36);
  });

  it("shows a placeholder with the page id when the image fails", () => {
    const { root, view } = setup();
    view.applyState({ source: "book1", page_id: 999, updated_at: "t0" });
    const img = root.querySelector(".pv-image") as HTMLImageElement;
    img.onerror?.(new Event("error") as never);
    const placeholder = root.querySelector(".pv-placeholder") as HTMLElement;
    expect(placeholder.hidden).toBe(false);
    expect(placeholder.textContent).toContain("999");
  });
});

describe("event stream", () => {
  it("delivers parsed events and reports reconnect status", async () => {
    type Source = {
      onmessage: ((ev: { data: string }) => void) | null;
      onerror: ((ev: unknown) => void) | null;
      onopen: ((ev: unknown) => void) | null;
      close(): void;
    };
    const sources: Source[] = [];
    const stream = new EventStream(
      "/api/events",
      () => {
        const src: Source = { onmessage: null, onerror: null, onopen: null, close() {} };
        sources.push(src);
        return src;
      },
      1,
    );
    const seen: string[] = [];
    const status: boolean[] = [];
    stream.onEvent((ev) => seen.push(ev.kind));
    stream.onStatus((c) => status.push(c));
    stream.connect();
    sources[0].onopen?.({});
    sources[0].onmessage?.({ data: '{"kind":"state","payload":{"page_id":37}}' });
    sources[0].onmessage?.({ data: ": keepalive" });
    expect(seen).toEqual(["state"]);
    sources[0].onerror?.({});
    expect(status).toEqual([true, false]);
    await new Promise((r) => setTimeout(r, 10));
    expect(sources.length).toBe(2); // a fresh EventSource was opened
    stream.close();
  });
});

describe("range banner", () => {
  it("offers boundary jumps and confirms exactly once", async () => {
    const server = new RecordedServer();
    const client = new ApiClient("", server.fetch);
    const root = document.createElement("div");
    document.body.appendChild(root);
    const jumps: number[] = [];
    const banner = new RangeBanner(root, client, "book1", (p) => jumps.push(p));
    await banner.refresh();
    expect(root.hidden).toBe(false);
    expect(root.textContent).toContain("37–150");
    (root.querySelector(".rb-start") as HTMLButtonElement).click();
    (root.querySelector(".rb-end") as HTMLButtonElement).click();
    expect(jumps).toEqual([37, 150]);
    const confirm = root.querySelector(".rb-confirm") as HTMLButtonElement;
    confirm.click();
    confirm.click();
    await new Promise((r) => setTimeout(r, 0));
    const posts = server.requests.filter((r) => r.method === "POST");
    expect(posts).toHaveLength(1);
    expect(server.range.verified_by_user).toBe(true);
    expect(root.hidden).toBe(true);
  });
});
