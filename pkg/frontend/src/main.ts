/** DOM glue for the explorer: wires the API client and pure view models to
 * the page. All score values rendered here come from view.ts verbatim. */

import { ApiClient } from "./api.js";
import {
  SelectionState,
  emptySelection,
  selectSpan,
  stateFromHash,
  stateToHash,
  toggleRegion,
  toggleToken,
} from "./state.js";
import type { Bundle, RegionsResponse, SessionResponse } from "./types.js";
import {
  curveViews,
  influenceColor,
  influenceRows,
  regionRanking,
  tokenViews,
  whatIfView,
} from "./view.js";

const api = new ApiClient("");

let session: SessionResponse | null = null;
let regions: RegionsResponse | null = null;
let bundle: Bundle | null = null;
let bundleId: string | null = null;
let selection: SelectionState = emptySelection;
let attributionInFlight = false;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function setStatus(text: string, isError = false) {
  const status = el<HTMLDivElement>("status");
  status.textContent = text;
  status.className = isError ? "status error" : "status";
}

async function fileToB64(file: File): Promise<string> {
  const buf = new Uint8Array(await file.arrayBuffer());
  let binary = "";
  buf.forEach((b) => {
    binary += String.fromCharCode(b);
  });
  return btoa(binary);
}

function renderTokens() {
  const strip = el<HTMLDivElement>("tokens");
  strip.textContent = "";
  if (!session) return;
  for (const token of tokenViews(session, selection.selected, bundle)) {
    const span = document.createElement("span");
    span.className = "tok" + (token.selected ? " sel" : "");
    span.dataset.position = String(token.position);
    span.textContent = token.text || "·";
    if (token.influence !== null) {
      span.style.background = influenceColor(token.influence);
      span.title = `influence ${token.influence}`;
    }
    span.onclick = () => {
      selection = toggleToken(selection, token.position);
      syncHash();
      renderTokens();
      renderControls();
    };
    strip.appendChild(span);
  }
}

/** Dragging across tokens selects every token the browser selection covers
 * (word-level targeting). */
function onTokenDragEnd() {
  if (!session || session.text === null) return;
  const picked = window.getSelection();
  if (!picked || picked.isCollapsed) return;
  const strip = el<HTMLDivElement>("tokens");
  const covered: number[] = [];
  strip.querySelectorAll<HTMLSpanElement>(".tok").forEach((span) => {
    if (picked.containsNode(span, true) && span.dataset.position !== undefined) {
      covered.push(Number(span.dataset.position));
    }
  });
  if (covered.length < 2) return;
  const offsets = session.offsets;
  const spans = covered
    .map((p) => offsets[p])
    .filter((o): o is [number, number] => o !== undefined);
  if (spans.length === 0) return;
  const start = Math.min(...spans.map((o) => o[0]));
  const end = Math.max(...spans.map((o) => o[1]));
  selection = selectSpan(selection, offsets, start, end);
  picked.removeAllRanges();
  syncHash();
  renderTokens();
  renderControls();
}

function renderControls() {
  el<HTMLButtonElement>("attribute").disabled =
    !session || selection.selected.size === 0 || attributionInFlight;
}

function renderInfluence() {
  const panel = el<HTMLDivElement>("influence");
  panel.textContent = "";
  if (!bundle) return;
  for (const row of influenceRows(bundle)) {
    const div = document.createElement("div");
    div.className = "inf-row";
    const bar = document.createElement("span");
    bar.className = "inf-bar";
    bar.style.width = `${Math.round(row.norm * 160)}px`;
    bar.style.background = influenceColor(row.norm);
    const label = document.createElement("span");
    label.textContent = `tok ${row.position}: ${row.variant} ${row.raw} (norm ${row.norm})`;
    div.append(bar, label);
    if (row.alt) {
      const alt = document.createElement("span");
      alt.className = "inf-alt";
      alt.textContent = ` / ${row.alt.variant} ${row.alt.raw}`;
      div.appendChild(alt);
    }
    panel.appendChild(div);
  }
}

function renderCurves() {
  const canvas = el<HTMLCanvasElement>("curves");
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  if (!bundle) return;
  const colors = { insertion: "#c23b22", deletion: "#2a6fc9" } as const;
  const pad = 24;
  const plotW = canvas.width - 2 * pad;
  const plotH = canvas.height - 2 * pad;
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, pad, plotW, plotH);
  const legend: string[] = [];
  for (const curve of curveViews(bundle)) {
    ctx.strokeStyle = colors[curve.kind];
    ctx.beginPath();
    curve.points.forEach((point, i) => {
      const x = pad + point.x * plotW;
      const y = pad + (1 - point.y) * plotH;
      if (i === 0) ctx.moveTo(x, y);
      else ctx.lineTo(x, y);
    });
    ctx.stroke();
    legend.push(`${curve.kind} AUC ${curve.auc}`);
  }
  el<HTMLDivElement>("curve-legend").textContent = legend.join("  |  ");
}

function renderRanking() {
  const panel = el<HTMLDivElement>("ranking");
  panel.textContent = "";
  if (!bundle) return;
  const top = regionRanking(bundle).slice(0, 10);
  panel.textContent =
    "top regions: " + top.map((r) => `#${r.region} (${r.score})`).join(", ");
}

function renderOverlay() {
  const image = el<HTMLImageElement>("base-image");
  const overlay = el<HTMLImageElement>("saliency-overlay");
  if (session) image.src = api.sessionImageUrl(session.session_id);
  if (bundleId && bundle) {
    overlay.src = api.saliencyUrl(bundleId);
    overlay.style.opacity = el<HTMLInputElement>("opacity").value;
    overlay.style.display = "block";
  } else {
    overlay.style.display = "none";
  }
}

function syncHash() {
  if (session) {
    window.location.hash = stateToHash(session.session_id, selection);
  }
}

async function createSession() {
  const files = el<HTMLInputElement>("image-file").files;
  const prompt = el<HTMLInputElement>("prompt").value;
  if (!files || files.length === 0) {
    setStatus("choose an image first", true);
    return;
  }
  setStatus("creating session...");
  try {
    const file = files[0];
    if (!file) return;
    const b64 = await fileToB64(file);
    session = await api.createSession(b64, prompt);
    regions = await api.regions(session.session_id);
    bundle = null;
    bundleId = null;
    selection = emptySelection;
    setStatus(
      `session ${session.session_id}: ${session.token_ids.length} tokens, ` +
        `${session.region_count} regions (${session.model_id})`,
    );
    renderTokens();
    renderControls();
    renderOverlay();
  } catch (error) {
    setStatus(`session failed: ${error}`, true);
  }
}

async function runAttribution() {
  if (!session || selection.selected.size === 0) return;
  attributionInFlight = true;
  renderControls();
  setStatus("attributing...");
  try {
    const positions = [...selection.selected].sort((a, b) => a - b);
    const { bundle_id } = await api.requestAttribution(session.session_id, positions);
    bundleId = bundle_id;
    bundle = await api.waitForBundle(bundle_id);
    setStatus(`bundle ${bundle_id} ready (${bundle.oracle.query_count} oracle queries)`);
    renderTokens();
    renderInfluence();
    renderCurves();
    renderRanking();
    renderOverlay();
  } catch (error) {
    setStatus(`attribution failed: ${error}`, true);
  } finally {
    attributionInFlight = false;
    renderControls();
  }
}

async function runWhatIf() {
  if (!session) return;
  const positions = selection.selected.size
    ? [...selection.selected].sort((a, b) => a - b)
    : undefined;
  try {
    const response = await api.whatIf(
      session.session_id,
      [...selection.removed].sort((a, b) => a - b),
      positions,
    );
    const view = whatIfView(response);
    const panel = el<HTMLDivElement>("whatif");
    panel.textContent =
      `removed [${view.removed.join(", ")}] -> ` +
      view.rows.map((r) => `p(tok ${r.position}) = ${r.prob}`).join(", ") +
      (view.text !== null ? ` | regenerated: ${JSON.stringify(view.text)}` : "");
  } catch (error) {
    setStatus(`what-if failed: ${error}`, true);
  }
}

function onImageClick(event: MouseEvent) {
  if (!session || !regions) return;
  const image = el<HTMLImageElement>("base-image");
  const rect = image.getBoundingClientRect();
  const x = Math.floor(((event.clientX - rect.left) / rect.width) * regions.width);
  const y = Math.floor(((event.clientY - rect.top) / rect.height) * regions.height);
  const index = y * regions.width + x;
  const region = regions.labels[index];
  if (region === undefined) return;
  selection = toggleRegion(selection, region);
  syncHash();
  void runWhatIf();
}

async function restoreFromHash() {
  const { sessionId, state } = stateFromHash(window.location.hash);
  if (!sessionId) return false;
  try {
    session = await api.getSession(sessionId);
    regions = await api.regions(sessionId);
    selection = state;
    setStatus(`restored session ${sessionId}`);
    renderTokens();
    renderControls();
    renderOverlay();
    return true;
  } catch {
    return false;
  }
}

function init() {
  el<HTMLButtonElement>("create-session").onclick = () => void createSession();
  el<HTMLButtonElement>("attribute").onclick = () => void runAttribution();
  el<HTMLInputElement>("opacity").oninput = renderOverlay;
  el<HTMLDivElement>("image-stack").onclick = (e) => onImageClick(e as MouseEvent);
  el<HTMLDivElement>("tokens").onmouseup = () => onTokenDragEnd();
  renderControls();
  void api
    .health()
    .then(async () => {
      const restored = await restoreFromHash();
      if (!restored) setStatus("connected");
    })
    .catch(() => setStatus("API unreachable", true));
}

init();
