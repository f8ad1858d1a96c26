/** three.js scene: shaded template with annotation tint, cage overlay
 * (wireframe + points), selected handle highlight and measure
 * visualizations. Rendering only - all geometry arrives from the
 * service and is swapped in atomically per revision. */

import * as THREE from "three";

import type { AnnotationJson } from "./types.js";
import type { LayerToggles } from "./viewState.js";

const TEMPLATE_COLOR = 0xb8c4d0;
const CAGE_COLOR = 0x2266cc;
const SELECTED_COLOR = 0xff5522;

export class Viewer {
  scene = new THREE.Scene();
  camera: THREE.PerspectiveCamera;
  private renderer: THREE.WebGLRenderer | null = null;
  private template: THREE.Mesh | null = null;
  private cageLines: THREE.LineSegments | null = null;
  private cagePoints: THREE.Points | null = null;
  private handleMarkers = new THREE.Group();
  private measureGroup = new THREE.Group();
  private cageVertices: Float32Array | null = null;

  constructor(canvas?: HTMLCanvasElement) {
    this.camera = new THREE.PerspectiveCamera(45, 1, 0.01, 100);
    this.camera.position.set(3, 2, 4);
    this.camera.lookAt(0, 0, 0);
    this.scene.add(new THREE.AmbientLight(0xffffff, 0.45));
    const key = new THREE.DirectionalLight(0xffffff, 0.9);
    key.position.set(3, 5, 4);
    this.scene.add(key);
    this.scene.add(this.handleMarkers);
    this.scene.add(this.measureGroup);
    if (canvas) {
      this.renderer = new THREE.WebGLRenderer({ canvas, antialias: true });
      this.renderer.setClearColor(0x10141a);
    }
  }

  resize(width: number, height: number): void {
    this.camera.aspect = width / height;
    this.camera.updateProjectionMatrix();
    this.renderer?.setSize(width, height, false);
  }

  setTemplate(vertices: Float32Array, triangles: number[]): void {
    const geometry = new THREE.BufferGeometry();
    geometry.setAttribute("position", new THREE.BufferAttribute(vertices, 3));
    geometry.setIndex(triangles);
    geometry.computeVertexNormals();
    const colors = new Float32Array(vertices.length).fill(1);
    geometry.setAttribute("color", new THREE.BufferAttribute(colors, 3));
    const material = new THREE.MeshLambertMaterial({
      color: TEMPLATE_COLOR,
      vertexColors: true,
    });
    if (this.template) this.scene.remove(this.template);
    this.template = new THREE.Mesh(geometry, material);
    this.scene.add(this.template);
  }

  /** Swap in a streamed vertex buffer without touching connectivity. */
  updateTemplateVertices(vertices: Float32Array): void {
    if (!this.template) return;
    const attr = this.template.geometry.getAttribute(
      "position"
    ) as THREE.BufferAttribute;
    (attr.array as Float32Array).set(vertices);
    attr.needsUpdate = true;
    this.template.geometry.computeVertexNormals();
  }

  /** Tint region/point annotations by their colour field. */
  tintAnnotations(annotations: AnnotationJson[], triangles: number[]): void {
    if (!this.template) return;
    const colorAttr = this.template.geometry.getAttribute(
      "color"
    ) as THREE.BufferAttribute;
    const colors = colorAttr.array as Float32Array;
    colors.fill(1);
    for (const ann of annotations) {
      const [r, g, b] = ann.colour.map((c) => c / 255);
      for (const v of annotationVertices(ann, triangles)) {
        colors[3 * v] = r;
        colors[3 * v + 1] = g;
        colors[3 * v + 2] = b;
      }
    }
    colorAttr.needsUpdate = true;
  }

  setCage(vertices: Float32Array, triangles: number[]): void {
    this.cageVertices = vertices;
    const geometry = new THREE.BufferGeometry();
    geometry.setAttribute("position", new THREE.BufferAttribute(vertices, 3));
    geometry.setIndex(triangles);
    if (this.cageLines) this.scene.remove(this.cageLines);
    if (this.cagePoints) this.scene.remove(this.cagePoints);
    this.cageLines = new THREE.LineSegments(
      new THREE.WireframeGeometry(geometry),
      new THREE.LineBasicMaterial({ color: CAGE_COLOR })
    );
    this.cagePoints = new THREE.Points(
      geometry,
      new THREE.PointsMaterial({ color: CAGE_COLOR, size: 6, sizeAttenuation: false })
    );
    this.scene.add(this.cageLines);
    this.scene.add(this.cagePoints);
  }

  setSelection(selection: number[]): void {
    this.handleMarkers.clear();
    if (!this.cageVertices) return;
    const geometry = new THREE.SphereGeometry(0.03, 12, 12);
    const material = new THREE.MeshBasicMaterial({ color: SELECTED_COLOR });
    for (const v of selection) {
      const marker = new THREE.Mesh(geometry, material);
      marker.position.set(
        this.cageVertices[3 * v],
        this.cageVertices[3 * v + 1],
        this.cageVertices[3 * v + 2]
      );
      this.handleMarkers.add(marker);
    }
  }

  applyToggles(toggles: LayerToggles): void {
    if (this.template) this.template.visible = toggles.templateSurface;
    if (this.cageLines) this.cageLines.visible = toggles.cageWireframe;
    if (this.cagePoints) this.cagePoints.visible = toggles.cagePoints;
  }

  /** Measure visualizations: ruler segment, tape polyline, or the two
   * clipping planes of a bounding measure. */
  showMeasure(
    ann: AnnotationJson,
    attrId: number,
    templateVertices: Float32Array
  ): void {
    this.measureGroup.clear();
    const attr = ann.attributes.find((a) => a.id === attrId);
    if (!attr || attr.type !== "measure" || !attr.measure) return;
    const pts = attr.measure.points.map(
      (v) =>
        new THREE.Vector3(
          templateVertices[3 * v],
          templateVertices[3 * v + 1],
          templateVertices[3 * v + 2]
        )
    );
    if (attr.measure.tool === "bounding" && attr.measure.direction) {
      const direction = new THREE.Vector3(...attr.measure.direction).normalize();
      const bary = pts
        .reduce((acc, p) => acc.add(p), new THREE.Vector3())
        .multiplyScalar(1 / pts.length);
      const offsets = pts.map((p) => p.clone().sub(bary).dot(direction));
      for (const extreme of [Math.min(...offsets), Math.max(...offsets)]) {
        const plane = new THREE.Mesh(
          new THREE.PlaneGeometry(1.5, 1.5),
          new THREE.MeshBasicMaterial({
            color: 0x44ff88,
            transparent: true,
            opacity: 0.25,
            side: THREE.DoubleSide,
          })
        );
        plane.position.copy(
          bary.clone().add(direction.clone().multiplyScalar(extreme))
        );
        plane.lookAt(plane.position.clone().add(direction));
        this.measureGroup.add(plane);
      }
      return;
    }
    const geometry = new THREE.BufferGeometry().setFromPoints(pts);
    this.measureGroup.add(
      new THREE.Line(geometry, new THREE.LineBasicMaterial({ color: 0x44ff88 }))
    );
  }

  clearMeasure(): void {
    this.measureGroup.clear();
  }

  /** Pointer delta (pixels) to a world-space translation on the camera
   * plane, scaled by the view distance. */
  pointerToWorld(dx: number, dy: number, height: number): [number, number, number] {
    const distance = this.camera.position.length();
    const scale =
      (2 * distance * Math.tan((this.camera.fov * Math.PI) / 360)) / height;
    const right = new THREE.Vector3();
    const up = new THREE.Vector3();
    this.camera.matrixWorld.extractBasis(right, up, new THREE.Vector3());
    const world = right
      .multiplyScalar(dx * scale)
      .add(up.multiplyScalar(-dy * scale));
    return [world.x, world.y, world.z];
  }

  /** Nearest cage vertex within a pick radius along a screen ray. */
  pickCageVertex(
    ndcX: number,
    ndcY: number,
    radius = 0.05
  ): number | null {
    if (!this.cageVertices) return null;
    const ray = new THREE.Raycaster();
    ray.setFromCamera(new THREE.Vector2(ndcX, ndcY), this.camera);
    let best: number | null = null;
    let bestDist = radius;
    const p = new THREE.Vector3();
    for (let v = 0; v < this.cageVertices.length / 3; v++) {
      p.set(
        this.cageVertices[3 * v],
        this.cageVertices[3 * v + 1],
        this.cageVertices[3 * v + 2]
      );
      const d = ray.ray.distanceToPoint(p);
      if (d < bestDist) {
        bestDist = d;
        best = v;
      }
    }
    return best;
  }

  render(): void {
    this.renderer?.render(this.scene, this.camera);
  }
}

function annotationVertices(ann: AnnotationJson, triangles: number[]): number[] {
  if (ann.type === "point") return ann.points ?? [];
  if (ann.type === "line") return (ann.polylines ?? []).flat();
  return (ann.boundaries ?? []).flat();
}
