/** App bootstrap: wire the viewer, drag controller, stream, residual
 * panel and graph panel to the DOM. */

import { ApiClient, ServiceError } from "./api.js";
import { DragController } from "./dragController.js";
import { GraphPanel } from "./graphPanel.js";
import { ResidualPanel } from "./residualPanel.js";
import { connectStream } from "./stream.js";
import type { AnnotationJson, RelationshipJson } from "./types.js";
import { Viewer } from "./viewer.js";
import { ViewState } from "./viewState.js";

const api = new ApiClient("");
const state = new ViewState();
const panel = new ResidualPanel();
const graph = new GraphPanel();

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

async function boot() {
  const canvas = el<HTMLCanvasElement>("canvas");
  const viewer = new Viewer(canvas);
  const resize = () => {
    viewer.resize(canvas.clientWidth, canvas.clientHeight);
  };
  window.addEventListener("resize", resize);
  resize();

  let triangles: number[] = [];
  let annotations: AnnotationJson[] = [];

  async function refreshSnapshot() {
    const doc = await api.getDoc();
    if (!doc.template) return;
    const template = await api.getTemplate();
    triangles = template.triangles;
    state.applyServerBuffer(template.revision, template.vertices, "snapshot");
    viewer.setTemplate(state.vertices!, triangles);
    annotations = (await api.getAnnotations())
      .annotations as AnnotationJson[];
    viewer.tintAnnotations(annotations, triangles);
    if (doc.cage) {
      const cage = await api.getCage();
      viewer.setCage(
        new Float32Array(
          (await import("./buffers.js")).decodeVertices(cage.vertices)
        ),
        cage.triangles
      );
      state.setSelection(cage.selection);
      viewer.setSelection(cage.selection);
    }
    const rels = (await api.getGraph()).relationships as RelationshipJson[];
    graph.load(annotations, rels);
    renderGraph();
  }

  connectStream((msg) => {
    if (state.applyServerBuffer(msg.revision, msg.vertices, "stream")) {
      viewer.updateTemplateVertices(state.vertices!);
      if (msg.residuals) {
        panel.update(msg.residuals);
        el("residuals").textContent = panel.renderText();
      }
    }
  });

  const drag = new DragController(api, state.revision, "translate", {
    toWorld: (dx, dy) => viewer.pointerToWorld(dx, dy, canvas.clientHeight),
    onResiduals: (report) => {
      panel.update(report);
      el("residuals").textContent = panel.renderText();
    },
    onConflict: () => void refreshSnapshot(),
    selectionSize: () => state.selection.length,
  });

  canvas.addEventListener("pointerdown", async (ev) => {
    if (state.tool === "select" || state.tool === "deselect") {
      const ndcX = (ev.offsetX / canvas.clientWidth) * 2 - 1;
      const ndcY = -((ev.offsetY / canvas.clientHeight) * 2 - 1);
      const hit = viewer.pickCageVertex(ndcX, ndcY);
      if (hit !== null) {
        const next = new Set(state.selection);
        if (state.tool === "select") next.add(hit);
        else next.delete(hit);
        const result = await api.selectHandles([...next]);
        state.setSelection(result.selection);
        viewer.setSelection(result.selection);
        drag.syncRevision(result.revision);
      }
      return;
    }
    if (state.tool === "move" || state.tool === "stretch") {
      drag.syncRevision(state.revision);
      drag.pointerDown(ev.offsetX, ev.offsetY);
    }
  });
  canvas.addEventListener("pointermove", (ev) => {
    void drag.pointerMove(ev.offsetX, ev.offsetY);
  });
  canvas.addEventListener("pointerup", () => void drag.pointerUp());

  for (const tool of ["camera", "select", "deselect", "move", "stretch"] as const) {
    el(`tool-${tool}`).addEventListener("click", () => {
      state.setTool(tool);
      document
        .querySelectorAll(".tool")
        .forEach((b) => b.classList.remove("active"));
      el(`tool-${tool}`).classList.add("active");
    });
  }
  el("session-on").addEventListener("click", async () => {
    try {
      await api.buildSession();
    } catch (e) {
      reportError(e);
    }
  });
  el("session-off").addEventListener("click", async () => {
    await api.withdrawSession();
    panel.update(null);
    el("residuals").textContent = panel.renderText();
  });

  function renderGraph() {
    const svg = el<HTMLElement>("graph");
    const parts: string[] = [];
    for (const seg of graph.drawList()) {
      parts.push(
        `<line x1="${seg.x1}" y1="${seg.y1}" x2="${seg.x2}" y2="${seg.y2}" ` +
          `stroke="#8fa" stroke-width="1.5" ` +
          (seg.kind === "arrow" ? 'marker-end="url(#arrow)"' : "") +
          `><title>${seg.arc.hoverText}</title></line>`
      );
    }
    for (const node of graph.nodes) {
      const [r, g, b] = node.colour;
      parts.push(
        `<circle cx="${node.x}" cy="${node.y}" r="8" fill="rgb(${r},${g},${b})"` +
          `><title>#${node.id} ${node.tag}</title></circle>`
      );
    }
    svg.innerHTML =
      `<defs><marker id="arrow" viewBox="0 0 10 10" refX="9" refY="5" ` +
      `markerWidth="6" markerHeight="6" orient="auto-start-reverse">` +
      `<path d="M 0 0 L 10 5 L 0 10 z" fill="#8fa"/></marker></defs>` +
      `<g transform="translate(130,130)">${parts.join("")}</g>`;
  }

  function reportError(e: unknown) {
    const message =
      e instanceof ServiceError
        ? `${e.payload.error}: ${e.payload.message}`
        : String(e);
    el("status").textContent = message;
  }

  await refreshSnapshot();
  drag.syncRevision(state.revision);

  function frame() {
    viewer.applyToggles(state.toggles);
    viewer.render();
    requestAnimationFrame(frame);
  }
  frame();
}

void boot();
