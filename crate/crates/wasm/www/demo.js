import init, { loss_curve, asymmetry_curve, intervals_by_lambda } from "./pkg/opd_wasm.js";

const $ = (id) => document.getElementById(id);
const grid = (a, b, n) => Array.from({ length: n }, (_, i) => a + (b - a) * i / (n - 1));

function plot(canvas, series, opts = {}) {
  const ctx = canvas.getContext("2d");
  const { width: W, height: H } = canvas;
  const pad = { l: 50, r: 10, t: 10, b: 28 };
  ctx.clearRect(0, 0, W, H);
  const xs = series.flatMap((s) => s.x);
  const ys = series.flatMap((s) => s.y).filter(Number.isFinite);
  const [x0, x1] = [Math.min(...xs), Math.max(...xs)];
  let [y0, y1] = opts.yRange ?? [Math.min(...ys), Math.max(...ys)];
  if (y1 === y0) { y0 -= 1; y1 += 1; }
  const sx = (x) => pad.l + (x - x0) / (x1 - x0) * (W - pad.l - pad.r);
  const sy = (y) => H - pad.b - (y - y0) / (y1 - y0) * (H - pad.t - pad.b);

  ctx.strokeStyle = "#888";
  ctx.fillStyle = "#444";
  ctx.font = "11px sans-serif";
  ctx.beginPath();
  ctx.moveTo(pad.l, pad.t); ctx.lineTo(pad.l, H - pad.b); ctx.lineTo(W - pad.r, H - pad.b);
  ctx.stroke();
  for (let i = 0; i <= 4; i++) {
    const x = x0 + (x1 - x0) * i / 4, y = y0 + (y1 - y0) * i / 4;
    ctx.fillText(+x.toPrecision(3), sx(x) - 10, H - 10);
    ctx.fillText(+y.toPrecision(3), 4, sy(y) + 4);
  }
  ctx.fillText(opts.xLabel ?? "", W - pad.r - 40, H - pad.b - 6);

  for (const s of series) {
    ctx.strokeStyle = s.color;
    ctx.fillStyle = s.color;
    ctx.lineWidth = s.width ?? 2;
    if (s.points) {
      s.x.forEach((x, i) => { ctx.beginPath(); ctx.arc(sx(x), sy(s.y[i]), 3, 0, 2 * Math.PI); ctx.fill(); });
      continue;
    }
    ctx.beginPath();
    let pen = false;
    s.x.forEach((x, i) => {
      const y = s.y[i];
      if (!Number.isFinite(y) || y > y1 * 1.5) { pen = false; return; }
      pen ? ctx.lineTo(sx(x), sy(y)) : ctx.moveTo(sx(x), sy(y));
      pen = true;
    });
    ctx.stroke();
  }
  ctx.lineWidth = 1;
}

function guarded(fn) {
  return () => {
    try { fn(); $("status").textContent = ""; }
    catch (e) { $("status").textContent = String(e.message ?? e); }
  };
}

const drawLoss = guarded(() => {
  const lam = +$("loss-lambda").value, delta = +$("loss-delta").value;
  $("loss-lambda-v").textContent = lam.toFixed(1);
  const y = grid(delta * 0.05, delta * 4, 300);
  const main = Array.from(loss_curve(lam, delta, y));
  const ref = Array.from(loss_curve(1, delta, y));
  const top = Math.max(...main.slice(0, 280), ...ref.slice(0, 280));
  plot($("loss"), [
    { x: y, y: ref, color: "#bbb", width: 1 },
    { x: y, y: main, color: "#1f6fb4" },
  ], { yRange: [0, top], xLabel: "y" });
});

const drawAsymmetry = guarded(() => {
  const lam = +$("asy-lambda").value, kind = $("asy-classical").value;
  $("asy-lambda-v").textContent = lam.toFixed(1);
  const f = grid(0.02, 0.98, 97);
  const pdl = Array.from(asymmetry_curve("pdl", lam, f));
  const cls = Array.from(asymmetry_curve(kind, 0.7, f));
  const top = Math.min(5, Math.max(...pdl, ...cls, 1.2));
  plot($("asy"), [
    { x: f, y: f.map(() => 1), color: "#bbb", width: 1 },
    { x: f, y: cls, color: "#d9622b" },
    { x: f, y: pdl, color: "#1f6fb4" },
  ], { yRange: [0, top], xLabel: "f" });
});

const drawIntervals = guarded(() => {
  const lams = grid(-3, 3, 13);
  const r = intervals_by_lambda(+$("iv-mu").value, +$("iv-v").value, +$("iv-alpha").value,
    Math.round(+$("iv-m").value), 42n, lams);
  const pred = [], lo = [], hi = [];
  for (let i = 0; i < lams.length; i++) { pred.push(r[3 * i]); lo.push(r[3 * i + 1]); hi.push(r[3 * i + 2]); }
  plot($("iv"), [
    { x: lams, y: lo, color: "#d9622b" },
    { x: lams, y: hi, color: "#d9622b" },
    { x: lams, y: pred, color: "#1f6fb4", points: true },
  ], { xLabel: "λ" });
  const row = (c) => `<tr>${c.map((v) => `<td>${v}</td>`).join("")}</tr>`;
  $("iv-table").innerHTML = "<tr><th>λ</th><th>predictor</th><th>lower</th><th>upper</th><th>width</th></tr>" +
    lams.map((l, i) => row([l.toFixed(1), pred[i].toPrecision(5), lo[i].toPrecision(5), hi[i].toPrecision(5),
      (hi[i] - lo[i]).toPrecision(5)])).join("");
});

await init();
for (const id of ["loss-lambda", "loss-delta"]) $(id).addEventListener("input", drawLoss);
for (const id of ["asy-lambda", "asy-classical"]) $(id).addEventListener("input", drawAsymmetry);
for (const id of ["iv-mu", "iv-v", "iv-alpha", "iv-m"]) $(id).addEventListener("change", drawIntervals);
drawLoss();
drawAsymmetry();
drawIntervals();
