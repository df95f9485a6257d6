//! Optional matplotlib scripts that read the CSV tables written next to them.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Fig1,
    Phase,
    Gumbel,
    Loo,
}

const PREAMBLE: &str = "\
import csv
import os
import matplotlib.pyplot as plt

HERE = os.path.dirname(os.path.abspath(__file__))


def read(name):
    with open(os.path.join(HERE, name), newline='') as fh:
        return list(csv.DictReader(fh))

";

const FIG1: &str = "\
rows = read('fig1_pmf.csv')
fig, ax = plt.subplots()
ps = sorted({int(r['p']) for r in rows})
for j, p in enumerate(ps):
    offset = (j - (len(ps) - 1) / 2) * 0.4 / max(len(ps), 1)
    sel = [r for r in rows if int(r['p']) == p]
    k = [int(r['k']) for r in sel]
    ax.bar([x + offset for x in k], [float(r['empirical_pmf']) for r in sel],
           width=0.4 / max(len(ps), 1), alpha=0.6, label=f'empirical, p={p}')
    ax.plot(k, [float(r['poisson_pmf']) for r in sel], 'o--', label=f'Poisson, p={p}')
ax.set_xlabel('number of bit errors')
ax.set_ylabel('probability')
ax.legend()
fig.savefig(os.path.join(HERE, 'fig1.png'), dpi=150)
";

const PHASE: &str = "\
rows = read('phase.csv')
alpha = [float(r['alpha_p']) for r in rows]
fig, ax = plt.subplots()
ax.errorbar(alpha, [float(r['p_correct_hat']) for r in rows],
            yerr=[[float(r['p_correct_hat']) - float(r['ci_lo']) for r in rows],
                  [float(r['ci_hi']) - float(r['p_correct_hat']) for r in rows]],
            fmt='o', label='empirical')
ax.plot(alpha, [float(r['p_correct_poisson_prediction']) for r in rows], '-', label='exp(-lambda)')
ax.axvline(1.0, color='grey', lw=0.5)
ax.set_xlabel('alpha')
ax.set_ylabel('P(exact recovery)')
ax.legend()
fig.savefig(os.path.join(HERE, 'phase.png'), dpi=150)
";

const GUMBEL: &str = "\
rows = read('gumbel.csv')
x = [float(r['x']) for r in rows]
fig, ax = plt.subplots()
ax.plot(x, [float(r['p_correct_hat']) for r in rows], 'o', label='empirical')
ax.plot(x, [float(r['poisson_prediction']) for r in rows], 's--', label='exp(-lambda)')
ax.plot(x, [float(r['gumbel_prediction']) for r in rows], '-', label='Gumbel limit')
ax.set_xlabel('x')
ax.set_ylabel('P(exact recovery)')
ax.legend()
fig.savefig(os.path.join(HERE, 'gumbel.png'), dpi=150)
";

const LOO: &str = "\
rows = read('loo_g.csv')
fig, ax = plt.subplots()
curves = {}
for r in rows:
    curves.setdefault((r['instance'], r['i']), []).append((float(r['v']), float(r['g_value'])))
for pts in curves.values():
    ax.plot([v for v, _ in pts], [g for _, g in pts], color='tab:blue', alpha=0.2)
quad = {float(r['v']): float(r['quad_value']) for r in rows}
v = sorted(quad)
ax.plot(v, [quad[t] for t in v], 'k--', label='quadratic prediction')
ax.set_xlabel('v')
ax.set_ylabel('g(v)')
ax.legend()
fig.savefig(os.path.join(HERE, 'loo.png'), dpi=150)
";

impl PlotKind {
    pub fn file_name(self) -> &'static str {
        match self {
            PlotKind::Fig1 => "plot_fig1.py",
            PlotKind::Phase => "plot_phase.py",
            PlotKind::Gumbel => "plot_gumbel.py",
            PlotKind::Loo => "plot_loo.py",
        }
    }

    pub fn script(self) -> String {
        let body = match self {
            PlotKind::Fig1 => FIG1,
            PlotKind::Phase => PHASE,
            PlotKind::Gumbel => GUMBEL,
            PlotKind::Loo => LOO,
        };
        format!("{PREAMBLE}{body}")
    }
}
