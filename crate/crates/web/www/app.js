// Built with `wasm-pack build crates/web --target web --out-dir www/pkg`.
import init, { transfer_surface, adc_curve, explore } from "./pkg/p2m_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function axes(ctx, w, h, pad) {
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#888";
  ctx.beginPath();
  ctx.moveTo(pad, pad);
  ctx.lineTo(pad, h - pad);
  ctx.lineTo(w - pad, h - pad);
  ctx.stroke();
}

function line(ctx, xs, ys, xmax, ymax, w, h, pad, color, step) {
  const sx = (x) => pad + (x / xmax) * (w - 2 * pad);
  const sy = (y) => h - pad - (y / ymax) * (h - 2 * pad);
  ctx.strokeStyle = color;
  ctx.beginPath();
  xs.forEach((x, k) => {
    if (k === 0) ctx.moveTo(sx(x), sy(ys[k]));
    else if (step) {
      ctx.lineTo(sx(x), sy(ys[k - 1]));
      ctx.lineTo(sx(x), sy(ys[k]));
    } else ctx.lineTo(sx(x), sy(ys[k]));
  });
  ctx.stroke();
}

let surface = null;

function drawSurface() {
  const n = Math.max(2, Math.min(201, num("ts-n")));
  surface = JSON.parse(transfer_surface(n));
  const heat = $("ts-heat").getContext("2d");
  const cell = 300 / n;
  const vmax = Math.max(...surface.surrogate.flat());
  surface.surrogate.forEach((row, a) =>
    row.forEach((v, b) => {
      const g = Math.round(255 * Math.max(0, v) / vmax);
      heat.fillStyle = `rgb(${g},${Math.round(g * 0.8)},${255 - g})`;
      // w along x, intensity upward
      heat.fillRect(a * cell, 300 - (b + 1) * cell, cell + 1, cell + 1);
    }));
  $("ts-note").textContent = surface.synthetic
    ? "Bundled surrogate is fitted to synthetic samples. Blue: surrogate, grey: ideal product."
    : "Blue: surrogate, grey: ideal product.";
  drawSlice();
}

function drawSlice() {
  const t = num("ts-i");
  $("ts-i-val").textContent = t.toFixed(3);
  const b = Math.round(t * (surface.i.length - 1));
  const c = $("ts-line").getContext("2d");
  axes(c, 420, 300, 30);
  const ymax = Math.max(1, ...surface.surrogate.flat());
  line(c, surface.w, surface.ideal.map((r) => r[b]), 1, ymax, 420, 300, 30, "#aaa");
  line(c, surface.w, surface.surrogate.map((r) => r[b]), 1, ymax, 420, 300, 30, "#2255cc");
}

function drawAdc() {
  const fs = num("adc-fs");
  let r;
  try {
    r = JSON.parse(adc_curve(num("adc-bits"), fs, num("adc-preset"), num("adc-vneg"), 600));
  } catch (e) {
    $("adc-note").innerHTML = `<span class="warn">${e.message ?? e}</span>`;
    return;
  }
  const c = $("adc-plot").getContext("2d");
  axes(c, 720, 300, 30);
  line(c, r.v_pos, r.code, 1.25 * fs, r.max_code, 720, 300, 30, "#cc5522", true);
  const same = r.code.every((v, k) => v === r.counter[k]);
  $("adc-note").textContent = `Codes 0..${r.max_code}. Cycle-level counter ${same ? "agrees" : "DISAGREES"} with the closed form on all ${r.code.length} points.`;
}

const fmt = (v, scale, digits) => (v == null ? "-" : (v * scale).toFixed(digits));

function drawExplorer() {
  const r = JSON.parse(explore(num("ex-k"), num("ex-c"), num("ex-b")));
  const p = r.point;
  const notes = [...p.violations];
  if (p.error && !notes.includes(p.error)) notes.push(p.error);
  $("ex-out").innerHTML = `
    <table>
      <tr><th></th><th>in-pixel</th><th>baseline</th></tr>
      <tr><td>bandwidth reduction</td><td>${fmt(p.br, 1, 4)}</td><td>1</td></tr>
      <tr><td>sensor output elements</td><td>${p.n_pix ?? "-"}</td><td>${r.baseline.n_pix}</td></tr>
      <tr><td>MACs (M)</td><td>${fmt(p.n_mac, 1e-6, 1)}</td><td>${fmt(r.baseline.n_mac, 1e-6, 1)}</td></tr>
      <tr><td>energy (uJ)</td><td>${fmt(p.e_tot, 1e6, 1)}</td><td>${fmt(r.baseline.energy.e_tot, 1e6, 1)}</td></tr>
      <tr><td>ADC time (ms)</td><td>${fmt(p.t_adc, 1e3, 3)}</td><td></td></tr>
      <tr><td>delay, sequential (ms)</td><td>${fmt(p.t_seq, 1e3, 2)}</td><td>${fmt(r.baseline.t_delay_sequential, 1e3, 2)}</td></tr>
      <tr><td>energy ratio</td><td>${fmt(r.energy_ratio, 1, 2)}</td><td></td></tr>
      <tr><td>delay ratio</td><td>${fmt(r.delay_ratio, 1, 2)}</td><td></td></tr>
    </table>
    ${notes.map((n) => `<p class="warn">${n}</p>`).join("")}`;
}

await init();
$("status").textContent = "";
$("ts-n").addEventListener("change", drawSurface);
$("ts-i").addEventListener("input", drawSlice);
for (const id of ["adc-bits", "adc-fs", "adc-preset", "adc-vneg"]) $(id).addEventListener("input", drawAdc);
for (const id of ["ex-k", "ex-c", "ex-b"]) $(id).addEventListener("input", drawExplorer);
drawSurface();
drawAdc();
drawExplorer();
