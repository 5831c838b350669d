// Review triage page: flagged queue, original vs inpainted panes with the
// candidate box overlaid, keyboard verdicts. Talks only to the review API.

import { ReviewApi } from './api.js';
import { DecisionBuffer } from './buffer.js';
import { applyOverlay, clampZoom, overlayRect } from './overlay.js';
import { TriageSession } from './session.js';
import type { EvidenceRecord, ItemDetail } from './types.js';

const queueCount = document.getElementById('queue-count')!;
const banner = document.getElementById('banner')!;
const itemTitle = document.getElementById('item-title')!;
const promptText = document.getElementById('prompt-text')!;
const originalLabel = document.getElementById('original-label')!;
const stateLine = document.getElementById('state-line')!;
const evidenceBody = document.getElementById('evidence-body')!;
const paneOriginalImg = document.getElementById('pane-original-img') as HTMLImageElement;
const paneEditedImg = document.getElementById('pane-edited-img') as HTMLImageElement;
const boxOriginal = document.getElementById('box-original')!;
const boxEdited = document.getElementById('box-edited')!;
const picker = document.getElementById('picker')!;
const pickerList = document.getElementById('picker-list')!;
const zoomOut = document.getElementById('zoom-out') as HTMLButtonElement;
const zoomIn = document.getElementById('zoom-in') as HTMLButtonElement;
const zoomLevel = document.getElementById('zoom-level')!;
const btnAccept = document.getElementById('btn-accept') as HTMLButtonElement;
const btnReassign = document.getElementById('btn-reassign') as HTMLButtonElement;
const btnDiscard = document.getElementById('btn-discard') as HTMLButtonElement;
const pendingCount = document.getElementById('pending-count')!;
const rejectedCount = document.getElementById('rejected-count')!;
const doneView = document.getElementById('done-view')!;
const workView = document.getElementById('work-view')!;

// Served same-origin by `synoe review --ui-dir`; tests point this at a
// server they spawned.
const apiBase = (window as { SYNOE_API_BASE?: string }).SYNOE_API_BASE ?? '';
const reviewer = new URLSearchParams(window.location.search).get('reviewer') ?? undefined;

export const api = new ReviewApi(apiBase);
export const buffer = new DecisionBuffer((d) => api.decide(d), { onChange: renderStatus });
export const session = new TriageSession(api, buffer, { reviewer });

let zoom = 2;
// bumped whenever a new item starts rendering; stale async loads bail out
let renderToken = 0;
let lastDetail: ItemDetail | null = null;
let lastOrigins: { original: [number, number]; edited: [number, number] } | null = null;

function renderStatus(): void {
  pendingCount.textContent = String(buffer.pendingCount);
  rejectedCount.textContent = String(buffer.rejected.length);
  banner.textContent = buffer.banner ?? '';
  banner.classList.toggle('hidden', buffer.banner === null);
}

function renderQueue(): void {
  queueCount.textContent = `${session.remaining} of ${session.entries.length} left`;
}

function evidenceRows(detail: ItemDetail): EvidenceRecord[] {
  const rows = detail.evidence?.detections ?? [];
  return [...rows].sort((a, b) => b.score - a.score);
}

function renderEvidence(detail: ItemDetail): void {
  evidenceBody.textContent = '';
  for (const rec of evidenceRows(detail)) {
    const tr = document.createElement('tr');
    for (const cell of [rec.label, rec.score.toFixed(3), rec.stage]) {
      const td = document.createElement('td');
      td.textContent = cell;
      tr.appendChild(td);
    }
    evidenceBody.appendChild(tr);
  }
}

/** Reposition both overlays and pane sizes from the cached state. The box
 * coordinates are a single multiply away from the served bbox; nothing is
 * measured back from layout. */
export function positionOverlays(): void {
  if (!lastDetail || !lastOrigins) return;
  applyOverlay(boxOriginal as HTMLElement, overlayRect(lastDetail.bbox, lastOrigins.original, zoom));
  applyOverlay(boxEdited as HTMLElement, overlayRect(lastDetail.bbox, lastOrigins.edited, zoom));
  for (const img of [paneOriginalImg, paneEditedImg]) {
    if (img.naturalWidth > 0) {
      img.style.width = `${img.naturalWidth * zoom}px`;
      img.style.height = `${img.naturalHeight * zoom}px`;
    }
  }
  zoomLevel.textContent = `${zoom}x`;
}

async function renderItem(): Promise<void> {
  const token = ++renderToken;
  renderQueue();
  if (session.mode === 'done') {
    workView.classList.add('hidden');
    doneView.classList.remove('hidden');
    doneView.textContent =
      `Queue complete. ${buffer.pendingCount} decision(s) still syncing, ` +
      `${buffer.rejected.length} rejected by the server.`;
    return;
  }
  const detail = await session.detail();
  if (!detail || token !== renderToken) return;
  lastDetail = detail;
  itemTitle.textContent = `annotation ${detail.annotation_id} (image ${detail.image_id})`;
  promptText.textContent = detail.prompt ?? '(none)';
  originalLabel.textContent = detail.original?.label ?? '(new placement)';
  stateLine.textContent = `${detail.category} / ${detail.provenance} / ${detail.audit_state}`;
  renderEvidence(detail);
  try {
    const [original, edited] = await Promise.all([
      api.fetchImage(detail.annotation_id, 'crop', 'original'),
      api.fetchImage(detail.annotation_id, 'crop', 'edited'),
    ]);
    if (token !== renderToken) return;
    lastOrigins = { original: original.origin, edited: edited.origin };
    // sizing runs again once pixels arrive; overlays do not wait for that
    paneOriginalImg.onload = positionOverlays;
    paneEditedImg.onload = positionOverlays;
    paneOriginalImg.src = original.url;
    paneEditedImg.src = edited.url;
  } catch {
    if (token !== renderToken) return;
    lastOrigins = { original: [0, 0], edited: [0, 0] };
  }
  positionOverlays();
}

function renderPicker(): void {
  picker.classList.toggle('hidden', session.mode !== 'picker');
  if (session.mode !== 'picker') return;
  pickerList.textContent = '';
  session.pickerClasses.forEach((cls, i) => {
    const li = document.createElement('li');
    li.textContent = `${i + 1}  ${cls}`;
    li.addEventListener('click', () => {
      react(session.pickClass(cls));
    });
    pickerList.appendChild(li);
  });
}

function react(outcome: string): void {
  renderPicker();
  renderStatus();
  if (outcome === 'decided' || outcome === 'done' || outcome === 'moved') {
    void renderItem();
  }
}

function onKey(event: KeyboardEvent): void {
  if (event.key === '+' || event.key === '=') {
    zoom = clampZoom(zoom + 1);
    positionOverlays();
    return;
  }
  if (event.key === '-') {
    zoom = clampZoom(zoom - 1);
    positionOverlays();
    return;
  }
  react(session.handleKey(event.key));
}

async function init(): Promise<void> {
  document.addEventListener('keydown', onKey);
  zoomIn.addEventListener('click', () => {
    zoom = clampZoom(zoom + 1);
    positionOverlays();
  });
  zoomOut.addEventListener('click', () => {
    zoom = clampZoom(zoom - 1);
    positionOverlays();
  });
  btnAccept.addEventListener('click', () => react(session.handleKey('a')));
  btnReassign.addEventListener('click', () => react(session.handleKey('r')));
  btnDiscard.addEventListener('click', () => react(session.handleKey('d')));
  try {
    await session.start();
  } catch (err) {
    banner.textContent = `cannot reach review service: ${String(err)}`;
    banner.classList.remove('hidden');
    return;
  }
  renderStatus();
  await renderItem();
}

/** Resolves once the queue is loaded and the first item rendered. */
export const ready: Promise<void> = init();
