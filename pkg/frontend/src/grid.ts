/**
 * Mapping-table grid editor.
 *
 * The mapping lives as delimiter-separated text on the wire; operators edit
 * it as a grid of rule rows. Parsing and serialization are exact inverses
 * for well-formed tables, so the grid never invents or loses cells.
 */

export const MAPPING_COLUMNS = [
  "record_path",
  "target_field",
  "source",
  "template",
  "condition",
] as const;

export type MappingRow = [string, string, string, string, string];

function splitCsvLine(line: string): string[] {
  const cells: string[] = [];
  let current = "";
  let quoted = false;
  for (let i = 0; i < line.length; i++) {
    const ch = line[i]!;
    if (quoted) {
      if (ch === '"') {
        if (line[i + 1] === '"') {
          current += '"';
          i++;
        } else {
          quoted = false;
        }
      } else {
        current += ch;
      }
    } else if (ch === '"') {
      quoted = true;
    } else if (ch === ",") {
      cells.push(current);
      current = "";
    } else {
      current += ch;
    }
  }
  cells.push(current);
  return cells;
}

function escapeCell(cell: string): string {
  return /[",\n]/.test(cell) ? `"${cell.replaceAll('"', '""')}"` : cell;
}

export function parseMappingText(text: string): MappingRow[] {
  const lines = text.split("\n").filter((line) => line.trim() !== "");
  const rows: MappingRow[] = [];
  for (const line of lines.slice(1)) {  // header is fixed
    const cells = splitCsvLine(line);
    while (cells.length < 5) cells.push("");
    rows.push(cells.slice(0, 5) as MappingRow);
  }
  return rows;
}

export function serializeMappingRows(rows: MappingRow[]): string {
  const lines = [MAPPING_COLUMNS.join(",")];
  for (const row of rows) {
    lines.push(row.map(escapeCell).join(","));
  }
  return lines.join("\n") + "\n";
}

export class MappingGrid {
  private rows: MappingRow[];

  constructor(
    private readonly container: HTMLElement,
    initialText: string,
    /** Fired with the serialized table after every cell edit or row change. */
    private readonly onChange: (mappingText: string) => void,
  ) {
    this.rows = parseMappingText(initialText);
    this.render();
  }

  get text(): string {
    return serializeMappingRows(this.rows);
  }

  setText(text: string): void {
    this.rows = parseMappingText(text);
    this.render();
  }

  private emit(): void {
    this.onChange(this.text);
  }

  private render(): void {
    this.container.replaceChildren();
    const table = document.createElement("table");
    table.className = "mapping-grid";
    const head = document.createElement("tr");
    for (const column of MAPPING_COLUMNS) {
      const th = document.createElement("th");
      th.textContent = column;
      head.appendChild(th);
    }
    head.appendChild(document.createElement("th"));
    table.appendChild(head);

    this.rows.forEach((row, rowIndex) => {
      const tr = document.createElement("tr");
      tr.dataset.row = String(rowIndex + 1);
      row.forEach((cell, colIndex) => {
        const td = document.createElement("td");
        const input = document.createElement("input");
        input.value = cell;
        input.dataset.column = MAPPING_COLUMNS[colIndex]!;
        input.addEventListener("input", () => {
          this.rows[rowIndex]![colIndex] = input.value;
          this.emit();
        });
        td.appendChild(input);
        tr.appendChild(td);
      });
      const actions = document.createElement("td");
      const remove = document.createElement("button");
      remove.textContent = "×";
      remove.title = "remove rule";
      remove.addEventListener("click", () => {
        this.rows.splice(rowIndex, 1);
        this.render();
        this.emit();
      });
      actions.appendChild(remove);
      tr.appendChild(actions);
      table.appendChild(tr);
    });

    const addRow = document.createElement("button");
    addRow.textContent = "Add rule";
    addRow.className = "add-rule";
    addRow.addEventListener("click", () => {
      this.rows.push(["", "", "", "", ""]);
      this.render();
      this.emit();
    });
    this.container.appendChild(table);
    this.container.appendChild(addRow);
  }

  /** Highlight the grid row a service-side parse error points at. */
  markError(row: number | null): void {
    for (const tr of this.container.querySelectorAll("tr[data-row]")) {
      tr.classList.toggle("error-row", row !== null && tr.getAttribute("data-row") === String(row));
    }
  }
}
