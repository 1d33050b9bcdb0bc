import init, { spectrum_heatmap, Simulation } from "./pkg/stgp_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);
const status = (msg) => { $("status").textContent = msg; };

// Blue-to-yellow ramp for t in [0, 1].
function color(t) {
  const c = Math.max(0, Math.min(1, t));
  return [Math.round(255 * c), Math.round(80 + 150 * c), Math.round(255 * (1 - c))];
}

function paintGrid(canvas, values, rows, cols) {
  const ctx = canvas.getContext("2d");
  let lo = Infinity, hi = -Infinity;
  for (const v of values) { if (v < lo) lo = v; if (v > hi) hi = v; }
  const span = hi > lo ? hi - lo : 1;
  const img = ctx.createImageData(cols, rows);
  values.forEach((v, i) => {
    const [r, g, b] = color((v - lo) / span);
    img.data.set([r, g, b, 255], 4 * i);
  });
  const tmp = new OffscreenCanvas(cols, rows);
  tmp.getContext("2d").putImageData(img, 0, 0);
  ctx.imageSmoothingEnabled = false;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.drawImage(tmp, 0, 0, canvas.width, canvas.height);
  return [lo, hi];
}

function drawSpectrum() {
  const kmax = 10;
  const vals = spectrum_heatmap(num("sp-mu1"), num("sp-mu2"), num("sp-sigma"), num("sp-eta"), num("sp-phi"), num("sp-v"), kmax);
  const side = 2 * kmax + 1;
  const [lo, hi] = paintGrid($("sp-canvas"), vals, side, side);
  status(`spectrum: log10 power in [${lo.toFixed(2)}, ${hi.toFixed(2)}]`);
}

let sim = null;

function showFrame() {
  if (!sim) return;
  const k = num("sim-frame");
  const n = sim.side();
  const [lo, hi] = paintGrid($("sim-canvas"), sim.frame(k), n, n);
  const tag = k >= sim.change_frame() ? " (after change)" : "";
  $("sim-label").textContent = `frame ${k}/${sim.n_frames() - 1}${tag}, range [${lo.toFixed(2)}, ${hi.toFixed(2)}]`;
}

function simulate() {
  status("simulating...");
  if (sim) sim.free();
  sim = new Simulation(num("sim-n"), BigInt(num("sim-seed")), num("sim-mu"));
  $("sim-frame").max = sim.n_frames() - 1;
  $("sim-frame").value = 0;
  showFrame();
  status(`simulated ${sim.n_frames()} frames, change at frame ${sim.change_frame()}`);
}

function detect() {
  if (!sim) simulate();
  const model = document.querySelector("input[name=model]:checked").value;
  status(`filtering with the ${model} model...`);
  const d = sim.detect(model);
  const labels = d.labels().split(";");
  const values = d.values();
  const alarms = d.trace_alarms();
  const nf = d.n_frames();
  d.free();

  const canvas = $("det-canvas");
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const x = (t) => 30 + (t / (nf - 1)) * (canvas.width - 40);
  // Change and alarm markers.
  ctx.strokeStyle = "#c00";
  ctx.beginPath(); ctx.moveTo(x(sim.change_frame()), 0); ctx.lineTo(x(sim.change_frame()), canvas.height); ctx.stroke();
  labels.forEach((_, i) => {
    const series = values.slice(i * nf + 1, (i + 1) * nf);
    let lo = Math.min(...series), hi = Math.max(...series);
    if (hi <= lo) hi = lo + 1;
    const y = (v) => canvas.height - 10 - ((v - lo) / (hi - lo)) * (canvas.height - 20);
    ctx.strokeStyle = `hsl(${(360 * i) / labels.length}, 60%, 45%)`;
    ctx.globalAlpha = 0.6;
    ctx.beginPath();
    series.forEach((v, t) => (t ? ctx.lineTo(x(t + 1), y(v)) : ctx.moveTo(x(t + 1), y(v))));
    ctx.stroke();
    if (alarms[i] >= 0) {
      ctx.fillStyle = ctx.strokeStyle;
      ctx.fillRect(x(alarms[i]) - 2, y(values[i * nf + alarms[i]]) - 2, 5, 5);
    }
  });
  ctx.globalAlpha = 1;
  const first = Math.min(...alarms.filter((a) => a >= 0));
  $("det-label").textContent =
    `${labels.length} traces (each scaled to its own range), change at frame ${sim.change_frame()}, ` +
    (Number.isFinite(first) ? `first alarm at frame ${first}` : "no alarm");
  status("done");
}

function guarded(f) {
  return () => {
    try { f(); } catch (e) { status(`error: ${e.message ?? e}`); }
  };
}

await init();
status("ready");
$("sp-go").onclick = guarded(drawSpectrum);
$("sim-go").onclick = guarded(simulate);
$("sim-frame").oninput = guarded(showFrame);
$("det-go").onclick = guarded(detect);
guarded(drawSpectrum)();
