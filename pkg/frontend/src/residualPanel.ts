/** Panel model for the per-constraint residual report. */

import type { ResidualEntry, ResidualReport } from "./types.js";

export interface ResidualRow {
  id: number | null;
  kind: string;
  weight: number;
  residual: number;
  satisfied: boolean;
  label: string;
}

export class ResidualPanel {
  rows: ResidualRow[] = [];
  totalEnergy = 0;
  iterations = 0;
  converged = true;

  /** Mirror the report field-for-field; internal rest anchors are part
   * of the solver plumbing and hidden from the panel. */
  update(report: ResidualReport | null): void {
    if (!report) {
      this.rows = [];
      this.totalEnergy = 0;
      this.iterations = 0;
      this.converged = true;
      return;
    }
    this.rows = report.constraints
      .filter((entry) => entry.kind !== "rest_anchor")
      .map((entry) => toRow(entry));
    this.totalEnergy = report.totalEnergy;
    this.iterations = report.iterations;
    this.converged = report.converged;
  }

  unsatisfied(): ResidualRow[] {
    return this.rows.filter((row) => !row.satisfied);
  }

  renderText(): string {
    const lines = this.rows.map(
      (row) =>
        `${row.satisfied ? "ok " : "!! "}${row.label}  residual=${row.residual.toExponential(3)}  w=${row.weight}`
    );
    lines.push(
      `energy=${this.totalEnergy.toExponential(3)} iterations=${this.iterations}` +
        (this.converged ? "" : " (not converged)")
    );
    return lines.join("\n");
  }
}

function toRow(entry: ResidualEntry): ResidualRow {
  const name = entry.id === null ? entry.kind : `#${entry.id} ${entry.kind}`;
  return { ...entry, label: name };
}
