import init, { graspDemo, squashCurve, scoreSurface } from "./pkg/sograb_web.js";

const $ = (id) => document.getElementById(id);
const view = { yaw: 0.6, pitch: 0.4, data: null };

function controls() {
  return {
    shape: $("shape").value,
    squash: Number($("squash").value),
    rotate: Number($("rotate").value),
    alpha: Number($("alpha").value),
    mode: $("mode").value,
    seed: Number($("seed").value) >>> 0,
  };
}

function project(p, cx, cy, scale) {
  const [x, y, z] = p;
  const cyw = Math.cos(view.yaw), syw = Math.sin(view.yaw);
  const cp = Math.cos(view.pitch), sp = Math.sin(view.pitch);
  const x1 = cyw * x + syw * y;
  const y1 = -syw * x + cyw * y;
  const z1 = cp * z - sp * y1;
  const depth = sp * z + cp * y1;
  return [cx + scale * x1, cy - scale * z1, depth];
}

function drawCloud() {
  const c = $("cloud"), g = c.getContext("2d");
  g.clearRect(0, 0, c.width, c.height);
  if (!view.data) return;
  const all = view.data.pre.concat(view.data.grasp);
  const mean = [0, 1, 2].map((k) => all.reduce((s, p) => s + p[k], 0) / all.length);
  const radius = Math.max(...all.map((p) => Math.hypot(p[0] - mean[0], p[1] - mean[1], p[2] - mean[2])));
  const scale = (0.42 * Math.min(c.width, c.height)) / radius;
  const pts = [];
  for (const [cloud, color] of [[view.data.pre, "#777"], [view.data.grasp, "#e67e22"]]) {
    for (const p of cloud) {
      pts.push([...project([p[0] - mean[0], p[1] - mean[1], p[2] - mean[2]], c.width / 2, c.height / 2, scale), color]);
    }
  }
  pts.sort((a, b) => b[2] - a[2]);
  for (const [x, y, , color] of pts) {
    g.fillStyle = color;
    g.fillRect(x - 1.5, y - 1.5, 3, 3);
  }
}

function axes(g, w, h, pad, xlabel, ylabel) {
  g.strokeStyle = "#444";
  g.beginPath();
  g.moveTo(pad, pad / 2);
  g.lineTo(pad, h - pad);
  g.lineTo(w - pad / 2, h - pad);
  g.stroke();
  g.fillStyle = "#222";
  g.fillText(xlabel, w / 2 - 20, h - 8);
  g.save();
  g.translate(12, h / 2 + 20);
  g.rotate(-Math.PI / 2);
  g.fillText(ylabel, 0, 0);
  g.restore();
}

function drawCurve(points) {
  const c = $("curve"), g = c.getContext("2d");
  const pad = 40, w = c.width, h = c.height;
  g.clearRect(0, 0, w, h);
  axes(g, w, h, pad, "squash ratio", "value");
  const sx = (s) => pad + ((1 - s) / (1 - points[points.length - 1].squash)) * (w - 1.5 * pad);
  const sy = (v) => h - pad - v * (h - 1.5 * pad);
  for (const [key, color] of [["dcd", "#c0392b"], ["score", "#27ae60"]]) {
    g.strokeStyle = color;
    g.beginPath();
    points.forEach((p, i) => (i ? g.lineTo : g.moveTo).call(g, sx(p.squash), sy(p[key])));
    g.stroke();
    g.fillStyle = color;
    g.fillText(key, w - 60, key === "dcd" ? 20 : 36);
  }
  g.fillStyle = "#222";
  for (const p of points.filter((_, i) => i % 2 === 0)) g.fillText(p.squash.toFixed(2), sx(p.squash) - 10, h - pad + 14);
}

function drawSurface(surface, marker) {
  const c = $("surface"), g = c.getContext("2d");
  const n = surface.size, cell = c.width / n;
  for (let i = 0; i < n; i++) {
    for (let j = 0; j < n; j++) {
      const v = i === n - 1 ? surface.successful[i * n + j] : surface.partial[i * n + j];
      g.fillStyle = `hsl(${Math.round(120 * v)}, 70%, 50%)`;
      g.fillRect(j * cell, (n - 1 - i) * cell, cell + 1, cell + 1);
    }
  }
  if (marker !== undefined) {
    g.strokeStyle = "#000";
    g.lineWidth = 2;
    g.beginPath();
    g.arc(marker * (c.width - cell) + cell / 2, cell / 2, 6, 0, 2 * Math.PI);
    g.stroke();
    g.lineWidth = 1;
  }
}

let surface = null;

function update() {
  const k = controls();
  $("squash-out").textContent = k.squash.toFixed(2);
  $("rotate-out").textContent = k.rotate;
  try {
    view.data = JSON.parse(graspDemo(k.shape, k.squash, k.rotate, k.alpha, k.mode, k.seed));
    const d = view.data;
    $("stats").textContent = `dcd    ${d.dcd.toFixed(4)}\nscore  ${d.score.toFixed(4)}\nrmse   ${(d.rmse * 1000).toFixed(3)} mm\nmode   ${d.mode}`;
    $("error").textContent = "";
    drawCloud();
    drawCurve(JSON.parse(squashCurve(k.shape, k.alpha, 0.5, 11, k.seed)));
    drawSurface(surface, d.dcd);
  } catch (e) {
    $("error").textContent = String(e);
  }
}

await init();
surface = JSON.parse(scoreSurface(60));
for (const id of ["shape", "squash", "rotate", "alpha", "mode", "seed"]) $(id).addEventListener("input", update);

let drag = null;
$("cloud").addEventListener("pointerdown", (e) => (drag = [e.clientX, e.clientY]));
window.addEventListener("pointerup", () => (drag = null));
window.addEventListener("pointermove", (e) => {
  if (!drag) return;
  view.yaw += (e.clientX - drag[0]) * 0.01;
  view.pitch = Math.max(-1.5, Math.min(1.5, view.pitch + (e.clientY - drag[1]) * 0.01));
  drag = [e.clientX, e.clientY];
  drawCloud();
});
update();
