// Generated by `wasm-bindgen --target web --out-dir www/pkg ...`; see README.
import init, { ramp_bands, autocorrelation, delay_weights } from "./pkg/fearec_wasm_demo.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function clear(canvas) {
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.font = "11px system-ui";
  return ctx;
}

// Bars for values[i] at x positions 1..n; `highlight` marks selected lags.
function bars(canvas, values, highlight = new Set(), label = (i) => i + 1) {
  const ctx = clear(canvas);
  const pad = 24;
  const w = (canvas.width - 2 * pad) / values.length;
  const hi = Math.max(...values.map(Math.abs), 1e-12);
  const zero = canvas.height / 2;
  ctx.strokeStyle = "#999";
  ctx.beginPath();
  ctx.moveTo(pad, zero);
  ctx.lineTo(canvas.width - pad, zero);
  ctx.stroke();
  values.forEach((v, i) => {
    const h = (v / hi) * (zero - 14);
    ctx.fillStyle = highlight.has(i + 1) ? "#d2691e" : "#4682b4";
    ctx.fillRect(pad + i * w + 1, zero - Math.max(h, 0), Math.max(w - 2, 1), Math.abs(h));
    if (values.length <= 64 && (values.length <= 32 || i % 2 === 0)) {
      ctx.fillStyle = "#333";
      ctx.fillText(String(label(i)), pad + i * w + 1, canvas.height - 2);
    }
  });
}

function guard(textId, fn) {
  try {
    $(textId).classList.remove("error");
    fn();
  } catch (e) {
    $(textId).classList.add("error");
    $(textId).textContent = String(e.message ?? e);
  }
}

function drawRamp() {
  $("ramp-alpha-out").textContent = $("ramp-alpha").value;
  guard("ramp-text", () => {
    const r = JSON.parse(ramp_bands(num("ramp-layers"), num("ramp-n"), num("ramp-alpha")));
    const canvas = $("ramp-canvas");
    const ctx = clear(canvas);
    const pad = 60;
    const rowH = Math.min(30, (canvas.height - 20) / r.bands.length);
    const x = (k) => pad + (k / r.spectrum_len) * (canvas.width - pad - 10);
    r.bands.forEach((b, i) => {
      const y = 4 + i * rowH;
      ctx.fillStyle = "#eee";
      ctx.fillRect(x(0), y, x(r.spectrum_len) - x(0), rowH - 4);
      ctx.fillStyle = "#4682b4";
      ctx.fillRect(x(b.start), y, x(b.end) - x(b.start), rowH - 4);
      ctx.fillStyle = "#333";
      ctx.fillText(`layer ${b.layer}`, 4, y + rowH / 2 + 2);
    });
    ctx.fillText("0 (low frequency)", x(0), canvas.height - 2);
    ctx.fillText(`${r.spectrum_len - 1} (high)`, x(r.spectrum_len) - 50, canvas.height - 2);
    $("ramp-text").textContent =
      `mode: ${r.mode}, half-spectrum length M = ${r.spectrum_len}\n` +
      r.bands.map((b) => `layer ${b.layer}: bins [${b.start}, ${b.end})`).join("\n");
  });
}

function drawAutocorr() {
  guard("ac-text", () => {
    const series = new Float64Array($("ac-series").value.trim().split(/[\s,]+/).filter(Boolean).map(Number));
    const r = JSON.parse(autocorrelation(series, num("ac-k")));
    bars($("ac-canvas"), r.scores, new Set(r.top));
    $("ac-text").textContent = `N = ${series.length}; top lags (best first): ${r.top.join(", ")}`;
  });
}

function drawDelay() {
  $("d-noise-out").textContent = $("d-noise").value;
  guard("d-text", () => {
    const r = JSON.parse(
      delay_weights(num("d-period"), num("d-n"), num("d-alpha"), num("d-layer"), num("d-layers"), num("d-m"), num("d-noise"), BigInt(num("d-seed")))
    );
    const n = r.heads[0].scores.length;
    const mass = new Array(n).fill(0);
    r.heads.forEach((h) => h.lags.forEach((t, i) => (mass[t - 1] += h.weights[i] / r.heads.length)));
    const chosen = new Set(r.heads.flatMap((h) => h.lags));
    bars($("d-canvas"), mass, chosen);
    const period = num("d-period");
    const onPeriod = mass.reduce((acc, w, i) => acc + ((i + 1) % period === 0 ? w : 0), 0);
    $("d-text").textContent =
      `band [${r.band.start}, ${r.band.end}), k = ${r.k}\n` +
      r.heads.map((h, i) => `head ${i + 1}: ` + h.lags.map((t, j) => `tau=${t} w=${h.weights[j].toFixed(3)}`).join("  ")).join("\n") +
      `\nweight at multiples of ${period}: ${(100 * onPeriod).toFixed(1)}%`;
  });
}

await init();
for (const id of ["ramp-layers", "ramp-n", "ramp-alpha"]) $(id).addEventListener("input", drawRamp);
for (const id of ["ac-series", "ac-k"]) $(id).addEventListener("input", drawAutocorr);
for (const id of ["d-period", "d-n", "d-alpha", "d-layer", "d-layers", "d-m", "d-noise", "d-seed"]) $(id).addEventListener("input", drawDelay);
drawRamp();
drawAutocorr();
drawDelay();
