import init, { tree_prior, simulate_and_fit, dimension } from "./pkg/guildtree_demo.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function pmfTable(pmf) {
  const rows = Object.entries(pmf)
    .map(([g, p]) => `<tr><td>${g}</td><td>${p.toFixed(3)}</td><td style="text-align:left"><span class="bar" style="width:${(p * 200).toFixed(0)}px"></span></td></tr>`)
    .join("");
  return `<table><tr><th>guilds</th><th>probability</th><th></th></tr>${rows}</table>`;
}

function show(target, f) {
  try {
    target.innerHTML = f();
  } catch (e) {
    target.innerHTML = `<p class="error">${e}</p>`;
  }
}

function runPrior() {
  show($("prior-out"), () => {
    const r = JSON.parse(tree_prior(num("prior-species"), num("prior-psplit"), num("prior-draws"), BigInt(7)));
    return `<p>${r.compositions} possible guild compositions; mean guild count ${r.mean_guilds.toFixed(2)}.</p>` +
      pmfTable(r.guild_count_pmf) +
      `<p>first draws: ${r.examples.map((e) => `<code>${e}</code>`).join(" ")}</p>`;
  });
}

function runFit() {
  $("fit-out").innerHTML = "<p>running...</p>";
  setTimeout(() => show($("fit-out"), () => {
    const r = JSON.parse(simulate_and_fit(BigInt(num("fit-seed")), num("fit-alpha"), num("fit-iter")));
    const slopes = r.slopes
      .map((s) => `<tr><td>${s.species}</td><td>${s.truth.toFixed(2)}</td><td>${s.mean.toFixed(3)}</td><td>${s.q025.toFixed(3)}</td><td>${s.q975.toFixed(3)}</td></tr>`)
      .join("");
    const co = r.cooccurrence
      .map((row) => `<tr>${row.map((v) => `<td style="background:rgba(68,170,119,${v.toFixed(2)})">${v.toFixed(2)}</td>`).join("")}</tr>`)
      .join("");
    return `<p>true guilds <code>${r.truth}</code>; mode <code>${r.mode}</code> (${r.mode_probability.toFixed(3)}) over ${r.draws} draws.` +
      (r.waic === null ? "" : ` WAIC ${r.waic.toFixed(2)}, p_eff ${r.p_eff.toFixed(2)}, holdout -2 x LPPD ${r.holdout_neg2_lppd.toFixed(2)}.`) + "</p>" +
      pmfTable(r.guild_count_pmf) +
      `<table><tr><th>species</th><th>true slope</th><th>mean</th><th>2.5%</th><th>97.5%</th></tr>${slopes}</table>` +
      `<p>co-occurrence</p><table>${co}</table>`;
  }), 0);
}

function runDimension() {
  show($("dim-out"), () => {
    const r = JSON.parse(dimension($("dim-partition").value, num("dim-species"), num("dim-predictors"), $("dim-family").value));
    return `<p><code>${r.partition}</code>: ${r.guilds} guilds, ${r.intercepts} intercepts + ${r.regression_coefficients} slopes + ${r.family_scalars} family scalars = ${r.total} parameters (${r.species_level_total} with one guild per species).</p>`;
  });
}

await init();
$("prior-run").addEventListener("click", runPrior);
$("fit-run").addEventListener("click", runFit);
$("dim-run").addEventListener("click", runDimension);
runPrior();
runDimension();
