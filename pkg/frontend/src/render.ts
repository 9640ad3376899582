/**
 * DOM rendering for preview and review panes.
 *
 * Rendering displays exactly what the service returned; no value shown here
 * is recomputed on the client.
 */

import { DiffResponse, PreviewResponse, RecordNode, StageRun } from "./api.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderRecordTree(container: HTMLElement, records: RecordNode[]): void {
  container.replaceChildren();
  const list = el("ul", "record-tree");
  for (const record of records) {
    list.appendChild(renderRecordNode(record));
  }
  container.appendChild(list);
}

function renderRecordNode(record: RecordNode): HTMLLIElement {
  const item = el("li", "record-node");
  const head = el("div", "record-head");
  head.appendChild(el("span", "record-id", record.local_id));
  if (record.level) head.appendChild(el("span", "record-level", record.level));
  const title = record.fields.find((f) => f.key === "title");
  if (title) head.appendChild(el("span", "record-title", title.value));
  item.appendChild(head);

  const fields = el("dl", "record-fields");
  for (const field of record.fields) {
    const key = field.language ? `${field.key} (${field.language})` : field.key;
    fields.appendChild(el("dt", undefined, key));
    const value = el("dd", undefined, field.value);
    if (field.target) {
      value.appendChild(el("span", "ap-target", ` → ${field.target}`));
    }
    fields.appendChild(value);
  }
  item.appendChild(fields);

  if (record.children.length) {
    const children = el("ul", "record-children");
    for (const child of record.children) children.appendChild(renderRecordNode(child));
    item.appendChild(children);
  }
  return item;
}

/** The EAD pane shows the serialized documents verbatim, one after another. */
export function renderEadPane(container: HTMLElement, documents: string[]): void {
  container.replaceChildren();
  const pre = el("pre", "ead-pane");
  pre.textContent = documents.join("");
  container.appendChild(pre);
}

export function renderDiagnostics(container: HTMLElement, stages: StageRun[]): void {
  container.replaceChildren();
  const table = el("table", "stage-trace");
  const head = el("tr");
  for (const column of ["#", "stage", "cache", "in", "out", "ms", "warnings"]) {
    head.appendChild(el("th", undefined, column));
  }
  table.appendChild(head);
  for (const run of stages) {
    const row = el("tr");
    row.appendChild(el("td", undefined, String(run.index)));
    row.appendChild(el("td", undefined, run.kind));
    row.appendChild(el("td", undefined, run.cache_hit ? "hit" : "miss"));
    row.appendChild(el("td", undefined, String(run.input_count)));
    row.appendChild(el("td", undefined, String(run.output_count)));
    row.appendChild(el("td", undefined, run.duration_ms.toFixed(1)));
    row.appendChild(el("td", "stage-warnings", run.warnings.join("; ")));
    table.appendChild(row);
  }
  container.appendChild(table);
}

export function renderPreview(
  recordsPane: HTMLElement,
  eadPane: HTMLElement,
  tracePane: HTMLElement,
  result: PreviewResponse,
): void {
  renderRecordTree(recordsPane, result.records);
  renderEadPane(eadPane, result.ead);
  renderDiagnostics(tracePane, result.trace.stages);
}

export function renderInlineError(container: HTMLElement, row: number | null, message: string): void {
  container.replaceChildren();
  const box = el("div", "inline-error");
  box.dataset.row = row === null ? "" : String(row);
  box.appendChild(el("strong", undefined, row === null ? "mapping error" : `row ${row}`));
  box.appendChild(el("span", undefined, ` ${message}`));
  container.appendChild(box);
}

export function renderDiff(container: HTMLElement, diff: DiffResponse): void {
  container.replaceChildren();
  const summary = el("div", "diff-summary");
  summary.textContent =
    `created ${diff.created.length}, updated ${diff.updated.length}, ` +
    `deleted ${diff.deleted.length}`;
  container.appendChild(summary);

  const addList = (title: string, ids: string[], cls: string) => {
    if (!ids.length) return;
    container.appendChild(el("h4", undefined, title));
    const list = el("ul", cls);
    for (const id of ids) list.appendChild(el("li", undefined, id));
    container.appendChild(list);
  };
  addList("Created", diff.created, "diff-created");
  addList("Deleted", diff.deleted, "diff-deleted");

  if (diff.updated.length) {
    container.appendChild(el("h4", undefined, "Updated"));
    const list = el("ul", "diff-updated");
    for (const unit of diff.updated) {
      const item = el("li", undefined, unit.global_id);
      const changes = el("ul", "field-changes");
      for (const change of unit.changes) {
        changes.appendChild(
          el("li", undefined, `${change.path}: ${JSON.stringify(change.before)} → ${JSON.stringify(change.after)}`),
        );
      }
      item.appendChild(changes);
      list.appendChild(item);
    }
    container.appendChild(list);
  }
}
