import init, { budget, compression, scan } from "./pkg/acfid_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);
const fmt = (x, d = 2) => (x == null ? "--" : Number(x).toFixed(d));
const sci = (x) => (x == null ? "--" : Number(x).toExponential(2));

function table(head, rows) {
  const th = head.map((h) => `<th>${h}</th>`).join("");
  const tr = rows.map((r) => `<tr>${r.join("")}</tr>`).join("");
  return `<table><thead><tr>${th}</tr></thead><tbody>${tr}</tbody></table>`;
}
const td = (v, cls = "") => `<td class="${cls}">${v}</td>`;

// Runs `call` after the button state has painted, reporting errors inline.
function wire(button, out, call, render) {
  $(button).addEventListener("click", () => {
    $(out).innerHTML = '<p class="note">running...</p>';
    $(button).disabled = true;
    setTimeout(() => {
      const t0 = performance.now();
      try {
        $(out).innerHTML = render(JSON.parse(call())) +
          `<p class="note">${((performance.now() - t0) / 1000).toFixed(2)} s</p>`;
      } catch (e) {
        $(out).innerHTML = `<p class="err">${e}</p>`;
      }
      $(button).disabled = false;
    }, 20);
  });
}

function renderBudget(v) {
  const b = v.budget;
  const widest = Math.max(...b.rows.map((r) => r.sum));
  const bar = (x, cls) => `<span class="bar ${cls}" style="width:${(200 * x) / widest}px"></span>`;
  const rows = b.rows.map((r) => [
    td(r.layer), td(fmt(r.occ)), td(fmt(r.strip)), td(fmt(r.adc)), td(fmt(r.sum)), td(fmt(r.mean_hits)),
    `<td style="text-align:left">${bar(r.occ, "occ")}${bar(r.strip, "strip")}${bar(r.adc, "adc")}</td>`,
  ]);
  rows.push([td("hits"), td(""), td(""), td(""), td(fmt(b.hits_total)), td(""), td("")]);
  rows.push([td("kinematics"), td(""), td(""), td(""), td(fmt(b.kinematics)), td(""), td("")]);
  rows.push([td("<b>total</b>"), td(""), td(""), td(""), td(`<b>${fmt(b.total)}</b>`), td(""), td("")]);
  return `<p>${v.mode} model, trained on ${v.n_train} events, ${v.n_test} held out.
    Achieved ${fmt(b.achieved_total, 3)} bits/event against ${fmt(b.total, 3)} ideal.
    Round trip: <b>${v.round_trip ? "bit-exact" : "FAILED"}</b>.</p>` +
    table(["layer view", "occupancy", "strip", "ADC", "sum", "&lt;hits&gt;", ""], rows) +
    `<p class="note">model ${v.model_hash.slice(0, 16)}...</p>`;
}

function renderCompress(v) {
  const x = (r) => (r == null ? "--" : `${fmt(r)}&times;`);
  const rows = v.table.rows.map((r) => [
    td(r.method), td(fmt(r.bytes / 1e3, 1)), td(x(r.ratio)), td(x(r.rel_uncond)), td(x(r.rel_cond)),
  ]);
  return `<p>${v.n_test} held-out events.</p>` +
    table(["method", "size [kB]", "ratio", "vs U-AC", "vs C-AC"], rows);
}

function renderScan(v) {
  const cell = (t, d) => {
    if (!t) return [td("--"), td("--")];
    const p = t.p_empirical;
    return [td(d(t.delta_l)), td(sci(p), p < v.alpha ? "sig" : "")];
  };
  const rows = v.rows.map((r) => [
    td(sci(r.epsilon)), ...cell(r.uncond, fmt), ...cell(r.cond, fmt), ...cell(r.mmd, sci),
    td(fmt(r.changed_adc_fraction, 4)),
  ]);
  const onset = (x) => (x == null ? "none" : sci(x));
  return `<p>|B1| = ${v.b1}, |B2| = ${v.b2}, training split ${v.train}; smallest attainable p ${sci(v.p_floor)}.
    Onset: unconditional ${onset(v.onset_uncond)}, conditional ${onset(v.onset_cond)}, MMD ${onset(v.onset_mmd)}.</p>` +
    table(["&epsilon;", "&Delta;L uncond", "p", "&Delta;L cond", "p", "MMD&sup2;", "p", "changed ADC"], rows);
}

await init();
wire("run-budget", "budget", () => budget(num("seed"), num("n"), $("cond").checked), renderBudget);
wire("run-compress", "compress", () => compression(num("seed"), num("n")), renderCompress);
wire("run-scan", "scan",
  () => scan(num("seed"), num("n"), $("grid").value, num("resamples"), $("mmd").checked), renderScan);
