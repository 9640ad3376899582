/**
 * Interactive mapping editor session: edits to the mapping-table text are
 * debounced into preview calls against the service.
 *
 * Invariant: the session's preview always corresponds to one previously
 * submitted mapping text, never a stale mix. A sequence number guards
 * against out-of-order responses and newer edits abort in-flight requests,
 * so at most one preview request is ever outstanding.
 */

import { ApiClient, MappingTextError, PreviewResponse } from "./api.js";
import { debounce, Debounced } from "./debounce.js";

export interface InlineError {
  row: number | null;
  expression: string | null;
  message: string;
}

export interface EditorView {
  /** Called with each accepted (non-stale) preview response. */
  onPreview(result: PreviewResponse, mappingText: string): void;
  /** Row-anchored parse problem; previous preview stays on screen. */
  onInlineError(error: InlineError): void;
  /** Transport or server failure (not a mapping parse problem). */
  onFailure(message: string): void;
}

export const DEFAULT_DEBOUNCE_MS = 400;

export class EditorSession {
  private mappingText: string;
  private previewText: string | null = null;
  private preview: PreviewResponse | null = null;
  private dirty = false;
  private seq = 0;
  private applied = 0;
  private inflight: AbortController | null = null;
  private readonly schedule: Debounced<[]>;

  constructor(
    private readonly api: ApiClient,
    readonly datasetId: string,
    initialMappingText: string,
    private readonly view: EditorView,
    private limit = 1,
    debounceMs: number = DEFAULT_DEBOUNCE_MS,
  ) {
    this.mappingText = initialMappingText;
    this.schedule = debounce(() => void this.requestPreview(), debounceMs);
  }

  get isDirty(): boolean {
    return this.dirty;
  }

  get currentMappingText(): string {
    return this.mappingText;
  }

  /** The mapping text the visible preview was computed from, if any. */
  get previewMappingText(): string | null {
    return this.previewText;
  }

  get lastPreview(): PreviewResponse | null {
    return this.preview;
  }

  /** Accept an edit; a preview request follows after the debounce interval. */
  edit(text: string): void {
    this.mappingText = text;
    this.dirty = true;
    this.schedule();
  }

  setLimit(limit: number): void {
    this.limit = Math.max(1, limit);
    this.schedule();
  }

  /** Skip the debounce wait (initial load, explicit refresh button). */
  refreshNow(): void {
    this.schedule.cancel();
    void this.requestPreview();
  }

  private async requestPreview(): Promise<void> {
    const mySeq = ++this.seq;
    const text = this.mappingText;
    this.inflight?.abort();
    const controller = new AbortController();
    this.inflight = controller;
    try {
      const result = await this.api.preview(this.datasetId, this.limit, text, controller.signal);
      if (mySeq < this.seq || mySeq <= this.applied) {
        return; // a newer edit superseded this response
      }
      this.applied = mySeq;
      this.preview = result;
      this.previewText = text;
      this.dirty = this.mappingText !== text;
      this.view.onPreview(result, text);
    } catch (err) {
      if (controller.signal.aborted) return;
      if (mySeq < this.seq) return;
      if (err instanceof MappingTextError) {
        this.view.onInlineError({ row: err.row, expression: err.expression, message: err.message });
      } else {
        this.view.onFailure(err instanceof Error ? err.message : String(err));
      }
    } finally {
      if (this.inflight === controller) this.inflight = null;
    }
  }
}
