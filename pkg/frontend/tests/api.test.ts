import { describe, expect, it } from "vitest";

import { ApiClient, ApiError, isAllowed } from "../src/api.js";
import { RecordedServer } from "./recorded.js";

describe("endpoint allow-list", () => {
  it("accepts exactly the documented endpoint set", () => {
    expect(isAllowed("GET", "/api/sources")).toBe(true);
    expect(isAllowed("GET", "/api/sources/book1/pages/37/image")).toBe(true);
    expect(isAllowed("GET", "/api/state")).toBe(true);
    expect(isAllowed("GET", "/api/approvals")).toBe(true);
    expect(isAllowed("GET", "/api/jobs/abc123")).toBe(true);
    expect(isAllowed("GET", "/api/sources/book1/range")).toBe(true);
    expect(isAllowed("GET", "/api/events")).toBe(true);
    expect(isAllowed("POST", "/api/approvals/abc123/decision")).toBe(true);
    expect(isAllowed("POST", "/api/sources/book1/range/confirm")).toBe(true);
  });

  it("rejects anything off the documented surface", () => {
    expect(isAllowed("GET", "/api/secrets")).toBe(false);
    expect(isAllowed("POST", "/api/state")).toBe(false);
    expect(isAllowed("GET", "/api/sources/../../etc/passwd")).toBe(false);
    expect(isAllowed("DELETE", "/api/approvals/abc123/decision")).toBe(false);
    expect(isAllowed("GET", "/api/sources/a/b/pages/1/image")).toBe(false);
  });

  it("throws locally before any network call for a bad path", async () => {
    let called = 0;
    const client = new ApiClient("", async () => {
      called += 1;
      return new Response("{}");
    });
    await expect(
      (client as unknown as { request: never }, client.job("../escape")),
    ).rejects.toThrow(/documented set/);
    expect(called).toBe(0);
  });
});

describe("client methods against a recorded server", () => {
  it("round-trips the documented payloads", async () => {
    const server = new RecordedServer();
    const client = new ApiClient("", server.fetch);
    const sources = await client.sources();
    expect(sources).toEqual([{ name: "book1", page_count: 200 }]);
    const state = await client.state();
    expect(state.page_id).toBe(37);
    const approvals = await client.approvals();
    expect(approvals[0].summary.pages).toBe("37-150 (114 pages)");
    expect(approvals[0].summary.estimate.total_cost).toBeCloseTo(1.4592);
    const progress = await client.job("job1");
    expect(progress.total_pages).toBe(114);
    const range = await client.range("book1");
    expect(range.verified_by_user).toBe(false);
  });

  it("surfaces HTTP errors as ApiError with the server message", async () => {
    const server = new RecordedServer();
    server.conflictOnDecide = true;
    const client = new ApiClient("", server.fetch);
    await expect(client.decide("appr1", "granted")).rejects.toMatchObject({
      status: 409,
    });
    await expect(client.decide("nope99", "granted")).rejects.toBeInstanceOf(ApiError);
  });

  it("builds image URLs without issuing a request", () => {
    const server = new RecordedServer();
    const client = new ApiClient("", server.fetch);
    expect(client.imageUrl("book1", 37)).toBe("/api/sources/book1/pages/37/image");
    expect(server.requests).toHaveLength(0);
  });
});
