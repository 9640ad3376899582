/** App wiring: dataset picker, mapping editor with live preview, review pane. */

import { ApiClient } from "./api.js";
import { EditorSession } from "./editor.js";
import { MappingGrid } from "./grid.js";
import { pollJob } from "./jobs.js";
import { renderInlineError, renderPreview } from "./render.js";
import { ReviewPanel } from "./review.js";

const API_BASE = (window as { ARCHINT_API?: string }).ARCHINT_API ?? "http://127.0.0.1:8642";

function byId(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node;
}

async function start(): Promise<void> {
  const api = new ApiClient(API_BASE, "webui");
  const picker = byId("dataset-picker") as HTMLSelectElement;
  const gridContainer = byId("mapping-grid");
  const limitInput = byId("preview-limit") as HTMLInputElement;
  const errorPane = byId("editor-errors");
  const recordsPane = byId("records-pane");
  const eadPane = byId("ead-pane");
  const tracePane = byId("trace-pane");
  const statusBadge = byId("status-badge");
  const runButtons = byId("run-buttons");
  const jobLog = byId("job-log");

  const datasets = await api.listDatasets();
  picker.replaceChildren(
    ...datasets.map((ds) => {
      const option = document.createElement("option");
      option.value = ds.id;
      option.textContent = `${ds.id} (${ds.status})`;
      return option;
    }),
  );

  let session: EditorSession | null = null;
  let review: ReviewPanel | null = null;
  let grid: MappingGrid | null = null;

  async function select(datasetId: string): Promise<void> {
    const dataset = await api.getDataset(datasetId);
    const mappingText = dataset.mapping_text ?? "record_path,target_field,source,template,condition\n";
    session = new EditorSession(api, datasetId, mappingText, {
      onPreview(result) {
        errorPane.replaceChildren();
        grid?.markError(null);
        renderPreview(recordsPane, eadPane, tracePane, result);
      },
      onInlineError(error) {
        grid?.markError(error.row);
        renderInlineError(errorPane, error.row, error.message);
      },
      onFailure(message) {
        renderInlineError(errorPane, null, message);
      },
    }, Number(limitInput.value) || 1);
    grid = new MappingGrid(gridContainer, mappingText, (text) => session?.edit(text));
    review = new ReviewPanel(api, datasetId, {
      status: statusBadge,
      diff: byId("diff-pane"),
      controls: byId("review-controls"),
      message: byId("review-message"),
    });
    await review.load();
    if (dataset.has_files) session.refreshNow();
  }

  picker.addEventListener("change", () => void select(picker.value));
  limitInput.addEventListener("change", () => session?.setLimit(Number(limitInput.value) || 1));

  for (const stage of ["fetch", "transform", "ingest"] as const) {
    const button = document.createElement("button");
    button.textContent = stage;
    button.addEventListener("click", async () => {
      jobLog.textContent = `${stage}: running...`;
      try {
        const job = await api.runStage(picker.value, stage);
        await pollJob(api, job.id, 300);
        jobLog.textContent = `${stage}: done`;
        await review?.load();
      } catch (err) {
        jobLog.textContent = `${stage}: ${err instanceof Error ? err.message : err}`;
      }
    });
    runButtons.appendChild(button);
  }

  if (datasets.length) {
    picker.value = datasets[0]!.id;
    await select(picker.value);
  }
}

void start();
