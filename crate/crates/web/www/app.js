import init, { solveGame, beliefTrace, regretTrace } from "./pkg/stackvd_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function guard(outId, fn) {
  try {
    fn();
  } catch (e) {
    $(outId).innerHTML = `<p class="err">${e}</p>`;
  }
}

function bars(values) {
  return values
    .map((v, i) => `<div>v${i} <span class="bar" style="width:${(v * 20).toFixed(1)}rem"></span> ${v.toFixed(3)}</div>`)
    .join("");
}

function polyline(xs, ys, w, h) {
  const xmax = Math.max(...xs), ymax = Math.max(...ys, 1e-12);
  const pts = xs.map((x, i) => `${(x / xmax) * w},${h - (ys[i] / ymax) * h}`).join(" ");
  return `<svg width="${w}" height="${h}"><polyline fill="none" stroke="#37a" stroke-width="2" points="${pts}"/></svg>`;
}

function runSolve() {
  guard("g-out", () => {
    const r = JSON.parse(solveGame(num("g-seed"), num("g-n"), num("g-paths"), num("g-types"), num("g-budget")));
    $("g-out").innerHTML =
      bars(r.coverage) +
      `<p>defender utility ${r.objective.toFixed(4)} (uniform coverage ${r.uniform_objective.toFixed(4)})</p>` +
      `<p>path chosen by each type: ${r.attacked_path.join(", ")}</p>` +
      `<pre>paths ${JSON.stringify(r.paths)}\npriors ${JSON.stringify(r.priors.map((p) => +p.toFixed(3)))}</pre>`;
  });
}

function runBelief() {
  guard("b-out", () => {
    const r = JSON.parse(beliefTrace(num("b-prior"), num("b-rho"), num("b-alpha"), $("b-obs").value));
    const p = r.posterior;
    $("b-out").innerHTML =
      polyline(p.map((_, i) => i), p.map((x) => x), 480, 120) +
      `<pre>${p.map((x) => x.toFixed(4)).join(" -> ")}</pre>`;
  });
}

function runRegret() {
  guard("r-out", () => {
    const r = JSON.parse(regretTrace(num("r-seed"), num("r-rounds"), num("r-delta")));
    const xs = r.points.map((p) => p[0]), ys = r.points.map((p) => p[1]);
    const last = r.points[r.points.length - 1];
    $("r-out").innerHTML =
      polyline(xs, ys, 480, 160) +
      `<p>${r.arms} arms, cumulative regret ${last[1].toFixed(2)} after ${last[0]} rounds (per round ${(last[1] / last[0]).toFixed(4)})</p>`;
  });
}

await init();
$("status").textContent = "Ready.";
$("g-run").onclick = runSolve;
$("b-run").onclick = runBelief;
$("r-run").onclick = runRegret;
runSolve();
runBelief();
