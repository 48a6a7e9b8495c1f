import init, { km_curve, concordance, train_demo } from "./pkg/mtsurv_web.js";

const $ = (id) => document.getElementById(id);
const COLORS = ["#1b7837", "#2166ac", "#b2182b"];

function show(id, text, error = false) {
  const el = $(id);
  el.textContent = text;
  el.className = error ? "err" : "";
}

// Draws curves on [0, xmax] x [0, 1]. Each curve is a list of [x, y].
function plot(canvas, curves, xmax, step) {
  const ctx = canvas.getContext("2d");
  const w = canvas.width, h = canvas.height, pad = 30;
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, 10, w - pad - 10, h - pad - 10);
  ctx.fillStyle = "#333";
  ctx.fillText("1", 10, 14);
  ctx.fillText("0", 10, h - pad);
  ctx.fillText(String(xmax), w - 30, h - 10);
  const sx = (x) => pad + (x / xmax) * (w - pad - 10);
  const sy = (y) => 10 + (1 - y) * (h - pad - 10);
  curves.forEach((pts, k) => {
    ctx.strokeStyle = COLORS[k % COLORS.length];
    ctx.beginPath();
    pts.forEach(([x, y], i) => {
      if (i === 0) {
        ctx.moveTo(sx(x), sy(y));
      } else {
        if (step) ctx.lineTo(sx(x), sy(pts[i - 1][1]));
        ctx.lineTo(sx(x), sy(y));
      }
    });
    ctx.stroke();
  });
}

function runKm() {
  try {
    const km = JSON.parse(km_curve($("km-input").value));
    const median = km.median === null ? "not reached" : km.median;
    show("km-out", `${km.times.length} event times, median ${median}`);
    const pts = [[0, 1], ...km.times.map((t, i) => [t, km.survival[i]])];
    const xmax = Math.max(1, ...km.times) * 1.1;
    plot($("km-plot"), [pts], Math.ceil(xmax), true);
  } catch (e) {
    show("km-out", e.message, true);
  }
}

function runConcordance() {
  try {
    const c = JSON.parse(concordance($("c-input").value));
    const idx = c.cindex === null ? "undefined (no admissible pairs)" : c.cindex.toFixed(4);
    show("c-out", `C-index ${idx}: ${c.concordant} concordant, ${c.tied} tied, ${c.discordant} discordant`);
  } catch (e) {
    show("c-out", e.message, true);
  }
}

function runTrain() {
  show("t-out", "training...");
  // Let the message paint before the synchronous training call.
  setTimeout(() => {
    try {
      const r = JSON.parse(train_demo(
        Number($("t-seed").value) >>> 0,
        Number($("t-n").value) >>> 0,
        Number($("t-epochs").value) >>> 0,
        Number($("t-rank").value),
      ));
      const c = r.validation_cindex === null ? "n/a" : r.validation_cindex.toFixed(4);
      show("t-out", `${r.epochs} epochs, kept epoch ${r.chosen_epoch}, validation C-index ${c}` +
        " (green: low x0, blue: middle, red: high)");
      const curves = r.strata.map((s) => [[0, 1], ...s.map((v, j) => [j + 1, v])]);
      plot($("t-plot"), curves, r.strata[0].length, false);
    } catch (e) {
      show("t-out", e.message, true);
    }
  }, 10);
}

await init();
$("km-run").onclick = runKm;
$("c-run").onclick = runConcordance;
$("t-run").onclick = runTrain;
runKm();
runConcordance();
