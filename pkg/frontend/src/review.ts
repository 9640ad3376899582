/**
 * Staging review and approval gating.
 *
 * The approve control stays disabled until the dataset is staged AND the
 * staging-vs-production diff has loaded; the promote control does not exist
 * in the DOM until an approval has succeeded. Status flows
 * staged -> approved -> promoted, mirroring the service's audit trail.
 */

import { ApiClient, DiffResponse } from "./api.js";
import { renderDiff } from "./render.js";

export interface ReviewElements {
  status: HTMLElement;
  diff: HTMLElement;
  controls: HTMLElement;
  message: HTMLElement;
}

export class ReviewPanel {
  private status = "unknown";
  private diffLoaded = false;
  private approveButton: HTMLButtonElement;
  private promoteButton: HTMLButtonElement | null = null;

  constructor(
    private readonly api: ApiClient,
    readonly datasetId: string,
    private readonly elements: ReviewElements,
  ) {
    this.approveButton = document.createElement("button");
    this.approveButton.className = "approve";
    this.approveButton.textContent = "Approve";
    this.approveButton.disabled = true;
    this.approveButton.addEventListener("click", () => void this.approve());
    this.elements.controls.replaceChildren(this.approveButton);
  }

  get currentStatus(): string {
    return this.status;
  }

  get isDiffLoaded(): boolean {
    return this.diffLoaded;
  }

  async load(): Promise<void> {
    const dataset = await this.api.getDataset(this.datasetId);
    this.status = dataset.status;
    this.renderStatus();
    if (this.status !== "staged") {
      this.elements.message.textContent =
        `Review needs a staged dataset; this one is ${this.status}.`;
      this.renderControls();
      return;
    }
    try {
      const diff: DiffResponse = await this.api.diff(this.datasetId);
      renderDiff(this.elements.diff, diff);
      this.diffLoaded = true;
      this.elements.message.textContent = "";
    } catch (err) {
      this.diffLoaded = false;
      this.elements.message.textContent =
        `Diff failed to load: ${err instanceof Error ? err.message : err}`;
    }
    this.renderControls();
  }

  private renderStatus(): void {
    this.elements.status.textContent = this.status;
    this.elements.status.dataset.status = this.status;
  }

  private renderControls(): void {
    this.approveButton.disabled = !(this.status === "staged" && this.diffLoaded);
    if (this.status === "approved" || this.status === "promoted") {
      if (this.promoteButton === null) {
        this.promoteButton = document.createElement("button");
        this.promoteButton.className = "promote";
        this.promoteButton.textContent = "Promote to production";
        this.promoteButton.addEventListener("click", () => void this.promote());
        this.elements.controls.appendChild(this.promoteButton);
      }
      this.promoteButton.disabled = this.status !== "approved";
    } else if (this.promoteButton !== null) {
      this.promoteButton.remove();
      this.promoteButton = null;
    }
  }

  async approve(): Promise<void> {
    if (this.approveButton.disabled) return;
    try {
      const dataset = await this.api.approve(this.datasetId);
      this.status = dataset.status;
      this.elements.message.textContent = "Approval recorded.";
    } catch (err) {
      this.elements.message.textContent =
        `Approval failed: ${err instanceof Error ? err.message : err}`;
    }
    this.renderStatus();
    this.renderControls();
  }

  async promote(): Promise<void> {
    if (!this.promoteButton || this.promoteButton.disabled) return;
    try {
      const report = await this.api.promote(this.datasetId);
      this.status = "promoted";
      this.elements.message.textContent =
        `Promoted: ${report.created} created, ${report.updated} updated, ` +
        `${report.unchanged} unchanged, ${report.deleted} deleted.`;
    } catch (err) {
      this.elements.message.textContent =
        `Promotion failed: ${err instanceof Error ? err.message : err}`;
    }
    this.renderStatus();
    this.renderControls();
  }
}
