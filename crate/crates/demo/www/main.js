import init, { ripple_vs_k, phase_error_rgba, frequency_limit } from "./pkg/bsc_demo.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function plotRipple() {
  const out = $("r-out");
  let curve;
  try {
    curve = ripple_vs_k(num("r-steps"), num("r-amp"), num("r-period"), num("r-kmax"), num("r-sigma"));
  } catch (e) {
    out.textContent = String(e);
    return;
  }
  const c = $("r-plot");
  const g = c.getContext("2d");
  g.clearRect(0, 0, c.width, c.height);
  const logs = Array.from(curve, (v) => Math.log10(Math.max(v, 1e-16)));
  const lo = Math.floor(Math.min(...logs));
  const hi = Math.ceil(Math.max(...logs));
  const px = (k) => 50 + (k * (c.width - 70)) / Math.max(curve.length - 1, 1);
  const py = (l) => 20 + ((hi - l) * (c.height - 50)) / Math.max(hi - lo, 1);
  g.strokeStyle = "#ddd";
  g.fillStyle = "#555";
  for (let l = lo; l <= hi; l++) {
    g.beginPath();
    g.moveTo(50, py(l));
    g.lineTo(c.width - 20, py(l));
    g.stroke();
    g.fillText(`1e${l}`, 8, py(l) + 4);
  }
  g.strokeStyle = "#c33";
  g.beginPath();
  logs.forEach((l, k) => (k ? g.lineTo(px(k), py(l)) : g.moveTo(px(k), py(l))));
  g.stroke();
  logs.forEach((l, k) => {
    g.fillStyle = "#c33";
    g.fillRect(px(k) - 3, py(l) - 3, 6, 6);
    g.fillStyle = "#555";
    g.fillText(`K=${k}`, px(k) - 10, c.height - 10);
  });
  out.textContent = Array.from(curve, (v, k) => `K=${k}  ${v.toExponential(3)} rad`).join("\n");
}

function drawField() {
  const c = $("f-img");
  $("f-kv").textContent = $("f-k").value;
  try {
    const rgba = phase_error_rgba(num("f-steps"), num("f-k"), num("f-amp"), 30, c.width, c.height, num("f-scale"));
    c.getContext("2d").putImageData(new ImageData(new Uint8ClampedArray(rgba), c.width, c.height), 0, 0);
    $("f-out").textContent = `red = phase ahead, blue = behind, full colour at ±${num("f-scale")} rad`;
  } catch (e) {
    $("f-out").textContent = String(e);
  }
}

function showLimit() {
  try {
    const r = frequency_limit(
      num("g-zmin"), num("g-zmax"), num("g-znom"), num("g-base"),
      num("g-pz"), num("g-pf"), num("g-pw"), num("g-f"));
    $("g-out").textContent =
      `segment length  ${r.segment_mm.toFixed(3)} mm\n` +
      `frequency limit ${r.f_limit.toFixed(3)} periods\n` +
      (r.satisfied ? "unique stereo match" : "ambiguous: lower the frequency");
    r.free();
  } catch (e) {
    $("g-out").textContent = String(e);
  }
}

await init();
for (const id of ["r-steps", "r-amp", "r-period", "r-sigma", "r-kmax"]) $(id).addEventListener("change", plotRipple);
for (const id of ["f-steps", "f-k", "f-amp", "f-scale"]) $(id).addEventListener("input", drawField);
document.querySelectorAll("[id^=g-]").forEach((el) => el.addEventListener("input", showLimit));
plotRipple();
drawField();
showLimit();
