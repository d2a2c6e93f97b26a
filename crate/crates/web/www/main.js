import init, { Demo } from "./pkg/ortdrift_web.js";

const HORIZON = 40;
const $ = (id) => document.getElementById(id);
let demo = null;

function status(text) {
  $("status").textContent = text;
}

function drawGray(canvas, n, values) {
  const ctx = canvas.getContext("2d");
  const img = ctx.createImageData(n, n);
  for (let p = 0; p < n * n; p++) {
    const v = Math.max(0, Math.min(255, Math.round(values[p] * 255)));
    img.data.set([v, v, v, 255], 4 * p);
  }
  blit(canvas, img);
}

function drawLabels(canvas, n, labels) {
  const ctx = canvas.getContext("2d");
  const img = ctx.createImageData(n, n);
  for (let p = 0; p < n * n; p++) {
    const h = (labels[p] * 2654435761) >>> 0;
    img.data.set([h & 255, (h >>> 8) & 255, (h >>> 16) & 255, 255], 4 * p);
  }
  blit(canvas, img);
}

// Rows are stored with y increasing, so flip vertically to put y = 1 on top.
function blit(canvas, img) {
  const off = new OffscreenCanvas(img.width, img.height);
  off.getContext("2d").putImageData(img, 0, 0);
  const ctx = canvas.getContext("2d");
  ctx.imageSmoothingEnabled = false;
  ctx.save();
  ctx.setTransform(1, 0, 0, -1, 0, canvas.height);
  ctx.drawImage(off, 0, 0, canvas.width, canvas.height);
  ctx.restore();
}

function drawChart(q, q0, m0) {
  const canvas = $("cusum");
  const ctx = canvas.getContext("2d");
  const w = canvas.width, h = canvas.height, pad = 24;
  ctx.clearRect(0, 0, w, h);
  const top = Math.max(q0 * 1.2, ...q, 1);
  const x = (i) => pad + (i / Math.max(1, q.length - 1)) * (w - 2 * pad);
  const y = (v) => h - pad - (v / top) * (h - 2 * pad);
  ctx.strokeStyle = "#c00";
  ctx.beginPath();
  ctx.moveTo(pad, y(q0));
  ctx.lineTo(w - pad, y(q0));
  ctx.stroke();
  ctx.strokeStyle = "#000";
  ctx.beginPath();
  q.forEach((v, i) => (i ? ctx.lineTo(x(i), y(v)) : ctx.moveTo(x(i), y(v))));
  ctx.stroke();
  ctx.fillStyle = "#000";
  q.forEach((v, i) => ctx.fillRect(x(i) - 2, y(v) - 2, 4, 4));
  ctx.fillText(`frame ${m0 + 1}`, pad, h - 6);
  ctx.fillText(`frame ${m0 + q.length}`, w - pad - 50, h - 6);
  ctx.fillText("q0", w - pad + 4, y(q0) + 4);
}

function timed(label, f) {
  const t0 = performance.now();
  try {
    const out = f();
    status(`${label} in ${(performance.now() - t0).toFixed(0)} ms`);
    return out;
  } catch (e) {
    status(`${label} failed: ${e.message ?? e}`);
    return null;
  }
}

function generate() {
  demo = timed("generated", () =>
    new Demo($("scenario").value, $("regime").value, Number($("n").value), Number($("sigma").value), HORIZON, Number($("seed").value)),
  );
  if (!demo) return;
  $("kappa").value = demo.defaultKappa();
  $("k").max = demo.len() - 1;
  showFrame();
}

function showFrame() {
  $("kval").textContent = $("k").value;
  if (demo) drawGray($("observed"), demo.n(), demo.frame(Number($("k").value)));
}

function predict() {
  if (!demo) return;
  const k = Number($("k").value), m0 = Number($("m0").value);
  const p = timed(`frame ${k} predicted from frames ${k - m0}..${k - 1}`, () => demo.predict(k, m0));
  if (!p) return;
  drawGray($("denoised"), demo.n(), p.denoised);
  drawLabels($("leaves"), demo.n(), p.labels);
  status(`${$("status").textContent}\n${p.leaves} leaves, per-dof MSE ${p.mse.toFixed(5)}`);
}

function chart() {
  if (!demo) return;
  const m0 = Number($("m0").value), q0 = Number($("q0").value);
  const q = timed("charted", () => demo.chart(m0, Number($("kappa").value), q0));
  if (!q) return;
  drawChart(Array.from(q), q0, m0);
  const first = Array.from(q).findIndex((v) => v > q0);
  status(`${$("status").textContent}\n${first < 0 ? "no signal" : `signal at frame ${m0 + first + 1}`}`);
}

await init();
$("generate").onclick = generate;
$("predict").onclick = predict;
$("chart").onclick = chart;
$("k").oninput = showFrame;
generate();
