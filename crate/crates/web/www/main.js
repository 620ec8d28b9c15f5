import init, { traceNeuron, phiMatrix, SequenceLearner } from "./pkg/tsslbp_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function showValues() {
  for (const out of document.querySelectorAll("output")) {
    out.textContent = $(out.htmlFor.value).value;
  }
}

function inputCurrent() {
  const n = num("steps");
  const amp = num("amp");
  const pattern = $("pattern").value;
  return Float64Array.from({ length: n }, (_, t) => {
    if (pattern === "pulses") return t % 6 < 2 ? amp * 2 : 0;
    if (pattern === "ramp") return (amp * 2 * t) / (n - 1);
    return amp;
  });
}

function clear(ctx) {
  ctx.clearRect(0, 0, ctx.canvas.width, ctx.canvas.height);
}

function drawTrace(tr, vth) {
  const ctx = $("trace").getContext("2d");
  clear(ctx);
  const { width: w, height: h } = ctx.canvas;
  const u = tr.potential(), a = tr.psc(), s = tr.spikes();
  const n = u.length;
  const top = Math.max(vth * 1.2, ...u, ...a);
  const bottom = Math.min(0, ...u);
  const x = (t) => 20 + (t * (w - 40)) / Math.max(n - 1, 1);
  const y = (v) => h - 30 - ((v - bottom) * (h - 50)) / (top - bottom || 1);
  const line = (vals, color) => {
    ctx.strokeStyle = color;
    ctx.lineWidth = 2;
    ctx.beginPath();
    vals.forEach((v, t) => (t ? ctx.lineTo(x(t), y(v)) : ctx.moveTo(x(t), y(v))));
    ctx.stroke();
  };
  ctx.setLineDash([5, 4]);
  ctx.strokeStyle = "#888";
  ctx.beginPath();
  ctx.moveTo(20, y(vth));
  ctx.lineTo(w - 20, y(vth));
  ctx.stroke();
  ctx.setLineDash([]);
  line(u, "#1f5fbf");
  line(a, "#e08020");
  ctx.fillStyle = "#000";
  s.forEach((v, t) => v && ctx.fillRect(x(t) - 1, h - 22, 3, 16));
}

function drawPhi(values, n) {
  const ctx = $("phi").getContext("2d");
  clear(ctx);
  const size = ctx.canvas.width / n;
  const peak = Math.max(1e-12, ...values.map(Math.abs));
  for (let k = 0; k < n; k++) {
    for (let m = 0; m < n; m++) {
      const v = values[k * n + m] / peak;
      const c = Math.round(255 * (1 - Math.abs(v)));
      ctx.fillStyle = v > 0 ? `rgb(255,${c},${c})` : v < 0 ? `rgb(${c},${c},255)` : "#fff";
      ctx.fillRect(m * size, k * size, Math.ceil(size), Math.ceil(size));
    }
  }
  ctx.strokeStyle = "#ddd";
  ctx.beginPath();
  ctx.moveTo(0, 0);
  ctx.lineTo(ctx.canvas.width, ctx.canvas.height);
  ctx.stroke();
}

function updateNeuron() {
  showValues();
  try {
    const current = inputCurrent();
    const [tm, ts, vth] = [num("taum"), num("taus"), num("vth")];
    drawTrace(traceNeuron(current, tm, ts, vth), vth);
    drawPhi(phiMatrix(current, tm, ts, vth, $("onset").checked, num("kappa")), current.length);
    $("error").textContent = "";
  } catch (e) {
    $("error").textContent = String(e);
  }
}

let learner = null;
let losses = [];
let timer = null;

function drawLoss() {
  const ctx = $("loss").getContext("2d");
  clear(ctx);
  const { width: w, height: h } = ctx.canvas;
  if (!losses.length) return;
  const peak = Math.max(...losses) || 1;
  const x = (i) => 40 + (i * (w - 50)) / Math.max(losses.length - 1, 1);
  const y = (v) => h - 20 - (v * (h - 40)) / peak;
  ctx.fillStyle = "#666";
  ctx.fillText(peak.toFixed(2), 2, 24);
  ctx.fillText("0", 2, h - 20);
  ctx.strokeStyle = "#1f5fbf";
  ctx.lineWidth = 2;
  ctx.beginPath();
  losses.forEach((v, i) => (i ? ctx.lineTo(x(i), y(v)) : ctx.moveTo(x(i), y(v))));
  ctx.stroke();
}

function drawRaster() {
  const ctx = $("raster").getContext("2d");
  clear(ctx);
  const rows = learner.outputs(), steps = learner.steps();
  const target = learner.target(), out = learner.output();
  const cw = (ctx.canvas.width - 20) / steps, ch = (ctx.canvas.height - 20) / rows;
  for (let r = 0; r < rows; r++) {
    for (let t = 0; t < steps; t++) {
      const i = r * steps + t;
      if (target[i]) {
        ctx.fillStyle = "#ccc";
        ctx.fillRect(10 + t * cw, 10 + r * ch, cw - 2, ch - 2);
      }
      if (out[i]) {
        ctx.fillStyle = "#000";
        ctx.fillRect(10 + t * cw + cw / 4, 10 + r * ch + ch / 4, cw / 2 - 1, ch / 2 - 1);
      }
    }
  }
}

function resetLearner() {
  stop();
  try {
    learner?.free();
    learner = new SequenceLearner(num("seed"), 20, 5, 5, Number($("lr").value));
    losses = [];
    drawLoss();
    drawRaster();
    $("status").textContent = "";
    $("error").textContent = "";
  } catch (e) {
    $("error").textContent = String(e);
  }
}

function tick() {
  for (let i = 0; i < 5 && learner.iterations() < 500; i++) losses.push(learner.step());
  drawLoss();
  drawRaster();
  $("status").textContent = `iteration ${learner.iterations()}, loss ${losses.at(-1).toFixed(4)}`;
  if (learner.iterations() >= 500) stop();
}

function stop() {
  clearInterval(timer);
  timer = null;
  $("run").textContent = "start";
}

await init();
for (const id of ["pattern", "amp", "steps", "taum", "taus", "vth", "onset", "kappa"]) {
  $(id).addEventListener("input", updateNeuron);
}
$("run").addEventListener("click", () => {
  if (timer) return stop();
  timer = setInterval(tick, 30);
  $("run").textContent = "pause";
});
$("reset").addEventListener("click", resetLearner);
$("seed").addEventListener("change", resetLearner);
$("lr").addEventListener("change", resetLearner);
updateNeuron();
resetLearner();
