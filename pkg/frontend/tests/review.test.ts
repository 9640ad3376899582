import { describe, expect, it } from "vitest";

import { ApiClient, DatasetPayload, DiffResponse } from "../src/api.js";
import { ReviewPanel, ReviewElements } from "../src/review.js";

function dataset(status: string): DatasetPayload {
  return {
    id: "ds1",
    repository_id: "us-005578",
    parent_scope: null,
    status,
    mapping_text: null,
    has_files: true,
    has_records: true,
    audit: [],
  };
}

const DIFF: DiffResponse = {
  dataset_id: "ds1",
  staging_digest: "aaa",
  production_digest: "bbb",
  created: ["us-005578/a"],
  deleted: [],
  updated: [],
};

interface StubOptions {
  status?: string;
  diffFails?: boolean;
}

function stubApi(options: StubOptions = {}) {
  let status = options.status ?? "staged";
  const log: string[] = [];
  const api = {
    async getDataset() {
      log.push("getDataset");
      return dataset(status);
    },
    async diff() {
      log.push("diff");
      if (options.diffFails) throw new Error("boom");
      return DIFF;
    },
    async approve() {
      log.push("approve");
      status = "approved";
      return dataset(status);
    },
    async promote() {
      log.push("promote");
      status = "promoted";
      return {
        dataset_id: "ds1", created: 1, updated: 0, unchanged: 0, deleted: 0,
        blocked: [], warnings: [],
      };
    },
  } as unknown as ApiClient;
  return { api, log, currentStatus: () => status };
}

function elements(): ReviewElements {
  return {
    status: document.createElement("span"),
    diff: document.createElement("div"),
    controls: document.createElement("div"),
    message: document.createElement("div"),
  };
}

function approveButton(els: ReviewElements): HTMLButtonElement {
  return els.controls.querySelector("button.approve")!;
}

function promoteButton(els: ReviewElements): HTMLButtonElement | null {
  return els.controls.querySelector("button.promote");
}

describe("ReviewPanel gating", () => {
  it("staged dataset: diff visible and approve enabled", async () => {
    const { api } = stubApi();
    const els = elements();
    const panel = new ReviewPanel(api, "ds1", els);
    await panel.load();
    expect(els.diff.textContent).toContain("created 1");
    expect(approveButton(els).disabled).toBe(false);
    expect(promoteButton(els)).toBeNull();
  });

  it("draft dataset: approve disabled with an explanation", async () => {
    const { api, log } = stubApi({ status: "draft" });
    const els = elements();
    const panel = new ReviewPanel(api, "ds1", els);
    await panel.load();
    expect(approveButton(els).disabled).toBe(true);
    expect(els.message.textContent).toContain("draft");
    expect(log).not.toContain("diff");  // no diff request for non-staged datasets
  });

  it("approve is unreachable before the diff request has succeeded", async () => {
    const { api, log } = stubApi({ diffFails: true });
    const els = elements();
    const panel = new ReviewPanel(api, "ds1", els);
    await panel.load();
    expect(approveButton(els).disabled).toBe(true);
    await panel.approve();  // guarded: no approval call goes out
    expect(log).not.toContain("approve");
  });

  it("approve before load does nothing", async () => {
    const { api, log } = stubApi();
    const panel = new ReviewPanel(api, "ds1", elements());
    await panel.approve();
    expect(log).not.toContain("approve");
  });

  it("promote control appears only after approval succeeds", async () => {
    const { api } = stubApi();
    const els = elements();
    const panel = new ReviewPanel(api, "ds1", els);
    await panel.load();
    expect(promoteButton(els)).toBeNull();
    await panel.approve();
    expect(promoteButton(els)).not.toBeNull();
    expect(promoteButton(els)!.disabled).toBe(false);
  });

  it("status badge runs staged -> approved -> promoted", async () => {
    const { api, currentStatus } = stubApi();
    const els = elements();
    const panel = new ReviewPanel(api, "ds1", els);
    const seen: string[] = [];
    await panel.load();
    seen.push(els.status.textContent!);
    await panel.approve();
    seen.push(els.status.textContent!);
    await panel.promote();
    seen.push(els.status.textContent!);
    expect(seen).toEqual(["staged", "approved", "promoted"]);
    expect(currentStatus()).toBe("promoted");
    expect(els.message.textContent).toContain("Promoted: 1 created");
  });

  it("promote button disables once promoted", async () => {
    const { api } = stubApi();
    const els = elements();
    const panel = new ReviewPanel(api, "ds1", els);
    await panel.load();
    await panel.approve();
    await panel.promote();
    expect(promoteButton(els)!.disabled).toBe(true);
  });
});
