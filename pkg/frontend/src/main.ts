/**
 * Entry point: wires the API client, event stream, page viewer, approval
 * console, and range banner into the static page served by the engine.
 */

import { ApiClient, ViewerState } from "./api.js";
import { ApprovalConsole } from "./approvals.js";
import { RangeBanner } from "./banner.js";
import { EventStream } from "./events.js";
import { PageView } from "./pageview.js";

async function boot(): Promise<void> {
  const api = new ApiClient();
  const reconnect = document.getElementById("reconnect") as HTMLElement;
  const sources = await api.sources();
  const source = sources.length > 0 ? sources[0] : null;

  const view = new PageView(
    document.getElementById("pageview") as HTMLElement,
    api,
    source ? source.page_count : Infinity,
  );
  const console_ = new ApprovalConsole(
    document.getElementById("approvals") as HTMLElement,
    api,
  );
  let banner: RangeBanner | null = null;
  if (source) {
    banner = new RangeBanner(
      document.getElementById("banner") as HTMLElement,
      api,
      source.name,
      (pageId) => view.showPage(source.name, pageId),
    );
    await banner.refresh();
  }

  view.applyState(await api.state());
  await console_.refresh();

  const stream = new EventStream(api.eventsUrl());
  stream.onStatus((connected) => {
    reconnect.hidden = connected;
  });
  stream.onEvent((ev) => {
    if (ev.kind === "state") {
      if ("range_confirmed" in ev.payload) {
        void banner?.refresh();
      } else {
        view.applyState(ev.payload as unknown as ViewerState);
      }
    } else {
      console_.handleEvent(ev.kind, ev.payload);
    }
  });
  stream.connect();
}

void boot();
