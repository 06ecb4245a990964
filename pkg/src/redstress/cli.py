"""Command-line entry point: ``redstress <command> [options]``.

Every command writes ``<command>.csv`` and/or ``<command>.json`` to the output
directory. Problems confined to one cell are recorded in that cell's row and do
not stop the run; configuration and ingest failures exit with status 2.
"""
from __future__ import annotations

import argparse
import csv
import sys
import warnings
from collections import defaultdict

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, apply_overrides, load_config
from .copula import CopulaFamily, CopulaSpec, calibrate_theta, cm_stats, correlation_views, theta_from_pearson
from .errors import IngestError, RedStressError, UnfittableError
from .factors import (autocorrelation, decomposition_fits, factor_series_from_levels, macro_fit,
                      read_factor_csv, vix_conditional)
from .flowdata import PoolFilter, _cell_rates, cells_in, daily_series, pool, read_flow_csv
from .liability import FundMoments, IMModel, LiabilityStructure, calibrate_im, geometric_structure
from .report import confidence_bucket, write_csv, write_json
from .riskmeasures import coherency_shocks, empirical_measures
from .simulate import SimConfig, aggregate_over_horizon, cm_draw, mc_risk_measures, run_chunks
from .zeroinflated import ZIModel, fit_mle, fit_mm, implied_return_time, zi_cvar, zi_moments, zi_quantile, zi_stress

EXIT_OK, EXIT_FATAL = 0, 2


def _t_key(T: float) -> str:
    return f"stress_T{T:g}"


def _soft(fn, row: dict):
    """Run fn(row) and record domain failures and warnings in the row."""
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            fn(row)
            row.setdefault("error", None)
        except (RedStressError, ValueError, ArithmeticError) as exc:
            row["error"] = f"{type(exc).__name__}: {exc}"
    if caught:
        row["warnings"] = "; ".join(str(w.message) for w in caught)
    return row


def _emit(cfg: RunConfig, command: str, columns: list, rows: list, extra: dict | None = None):
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if "csv" in cfg.formats:
        written.append(write_csv(cfg.out_dir / f"{command}.csv", columns, rows))
    if "json" in cfg.formats:
        payload = {"command": command, "config": cfg.echo(), "rows": rows}
        if extra:
            payload.update(extra)
        written.append(write_json(cfg.out_dir / f"{command}.json", payload))
    for p in written:
        print(p)


def _records(cfg: RunConfig):
    records, errors = read_flow_csv(cfg.flows)
    for e in errors:
        print(f"warning: skipped {e}", file=sys.stderr)
    if not records:
        raise IngestError(f"{cfg.flows}: no valid rows", errors)
    return records


def _filter(cfg: RunConfig) -> PoolFilter:
    return PoolFilter(exclude_mandates=cfg.exclude_mandates, min_tna=cfg.min_tna,
                      start=cfg.start, end=cfg.end)


def _read_concentration(path) -> dict:
    """fund_id,effective_n file -> {fund_id: effective_n}."""
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [c.strip() for c in reader.fieldnames] != ["fund_id", "effective_n"]:
            raise IngestError(f"{path}: concentration CSV header must be 'fund_id,effective_n'")
        for row in reader:
            out[row["fund_id"].strip()] = float(row["effective_n"])
    return out


def _cell_row(cell, **kw) -> dict:
    row = {"investor_category": cell.investor_category, "fund_category": cell.fund_category}
    row.update(kw)
    return row


# -- commands ---------------------------------------------------------------------

def cmd_stats(cfg: RunConfig) -> int:
    records = _records(cfg)
    flt = _filter(cfg)
    rows = []
    for cell in cells_in(records):
        sample = pool(records, cell, flt)

        def work(row, sample=sample):
            row.update(n=sample.n, n0=sample.n0, n1=sample.n1, confidence=confidence_bucket(sample.n))
            m = empirical_measures(sample, cfg.c, cfg.alpha, cfg.reliability_floor)
            row.update({k: v for k, v in m.as_dict().items() if k not in ("n", "alpha", "c")})
            row["frequency"] = sample.n1 / sample.n
            row["max_rate"] = float(sample.values.max())

        rows.append(_soft(work, _cell_row(cell)))
    cols = ["investor_category", "fund_category", "n", "n0", "n1", "confidence", "frequency",
            "mean", "sd_measure", "var", "cvar", "ratio", "max_rate", "low_confidence",
            "error", "warnings"]
    _emit(cfg, "stats", cols, rows, {"alpha": cfg.alpha, "c": cfg.c})
    return EXIT_OK


def _zi_summary(row: dict, m: ZIModel, cfg: RunConfig):
    mo = zi_moments(m)
    row.update(model_mean=mo.mean, model_variance=mo.variance, model_skewness=mo.skewness,
               model_excess_kurtosis=mo.excess_kurtosis,
               model_var=zi_quantile(m, cfg.alpha), model_cvar=zi_cvar(m, cfg.alpha))
    for T in cfg.T_grid:
        row[_t_key(T)] = zi_stress(m, T)
    try:
        row["implied_return_time"] = implied_return_time(m, cfg.alpha) if m.p > 0 else None
    except RedStressError as exc:
        row["implied_return_time"] = None
        row["note"] = str(exc)


def cmd_fit_zi(cfg: RunConfig) -> int:
    if cfg.zi_method not in ("mm", "mle"):
        raise ConfigError(f"[zi] method must be 'mm' or 'mle', got {cfg.zi_method!r}")
    records = _records(cfg)
    flt = _filter(cfg)
    fitter = fit_mm if cfg.zi_method == "mm" else fit_mle
    rows = []
    for cell in cells_in(records):
        sample = pool(records, cell, flt)

        def work(row, sample=sample):
            row.update(n=sample.n, n1=sample.n1, confidence=confidence_bucket(sample.n),
                       low_confidence=sample.n < cfg.reliability_floor)
            try:
                fit = fitter(sample)
            except UnfittableError as exc:
                row["p"] = exc.p_hat
                raise
            row.update(method=fit.method, p=fit.p, a=fit.a, b=fit.b, mu=fit.mu, sigma=fit.sigma,
                       loglik=fit.loglik)
            if fit.warnings:
                row["warnings"] = "; ".join(fit.warnings)
            _zi_summary(row, fit.model, cfg)

        rows.append(_soft(work, _cell_row(cell)))
    cols = (["investor_category", "fund_category", "n", "n1", "confidence", "low_confidence", "method", "p", "a", "b",
             "mu", "sigma", "loglik", "model_mean", "model_variance", "model_skewness",
             "model_excess_kurtosis", "model_var", "model_cvar", "implied_return_time"]
            + [_t_key(T) for T in cfg.T_grid] + ["note", "error", "warnings"])
    _emit(cfg, "fit-zi", cols, rows, {"alpha": cfg.alpha, "T_grid": cfg.T_grid})
    return EXIT_OK


def _per_fund_moments(records, cell, flt, conc: dict, default_n: float) -> list:
    by_fund = defaultdict(list)
    for (fund, _date), r in _cell_rates(records, cell, flt).items():
        by_fund[fund].append(r)
    out = []
    for fund in sorted(by_fund):
        x = np.array(by_fund[fund])
        pos = x[x > 0]
        p = pos.size / x.size
        if pos.size < 2 or p >= 1:
            continue
        out.append((fund, x.size, FundMoments(p, float(pos.mean()), float(pos.std()),
                                              conc.get(fund, default_n))))
    return out


def cmd_fit_im(cfg: RunConfig) -> int:
    records = _records(cfg)
    flt = _filter(cfg)
    conc = _read_concentration(cfg.concentration) if cfg.concentration else {}
    rows = []
    for cell in cells_in(records):
        def work(row, cell=cell):
            funds = _per_fund_moments(records, cell, flt, conc, cfg.effective_n)
            row["n_funds"] = len(funds)
            if not funds:
                raise UnfittableError("no fund with at least two positive rates", p_hat=None)
            weights = [n for _, n, _ in funds]
            cal = calibrate_im([f for *_, f in funds], fund_weights=weights,
                               moment_weights=cfg.moment_weights, seed=cfg.seed)
            row.update(p_tilde=cal.p_tilde, mu_tilde=cal.mu_tilde, sigma_tilde=cal.sigma_tilde,
                       criterion=cal.criterion, unrealistic=cal.unrealistic,
                       converged=cal.converged)

        rows.append(_soft(work, _cell_row(cell)))
    cols = ["investor_category", "fund_category", "n_funds", "p_tilde", "mu_tilde", "sigma_tilde",
            "criterion", "unrealistic", "converged", "error", "warnings"]
    _emit(cfg, "fit-im", cols, rows, {"moment_weights": list(cfg.moment_weights)})
    return EXIT_OK


def cmd_fit_copula(cfg: RunConfig) -> int:
    if cfg.effective_n <= 1:
        raise ConfigError("[im] effective_n must exceed 1 to calibrate a copula")
    records = _records(cfg)
    flt = _filter(cfg)
    H = 1.0 / cfg.effective_n
    rows = []
    for cell in cells_in(records):
        def work(row, cell=cell):
            s = daily_series(records, cell, flt, cfg.tna_weighted)
            F = s.frequency[np.isfinite(s.frequency)]
            row.update(n_days=len(s), mean_frequency=float(F.mean()),
                       std_frequency=float(F.std(ddof=1)) if F.size > 1 else 0.0, H=H)
            for fam in (CopulaFamily.CLAYTON, CopulaFamily.NORMAL):
                try:
                    cal = calibrate_theta(row["mean_frequency"], row["std_frequency"], H, fam)
                    row[f"{fam.value}_theta"] = cal.theta
                    row[f"{fam.value}_pearson"] = cal.pearson
                    row[f"{fam.value}_spearman"] = correlation_views(cal.spec).spearman_rho
                except RedStressError as exc:
                    row[f"{fam.value}_error"] = str(exc)

        rows.append(_soft(work, _cell_row(cell)))
    cols = ["investor_category", "fund_category", "n_days", "mean_frequency", "std_frequency", "H"]
    for fam in ("clayton", "normal"):
        cols += [f"{fam}_theta", f"{fam}_pearson", f"{fam}_spearman", f"{fam}_error"]
    _emit(cfg, "fit-copula", cols, rows)
    return EXIT_OK


def cmd_stress(cfg: RunConfig) -> int:
    rows = []
    for label, (p, mu, sigma) in cfg.triplets.items():
        def work(row, p=p, mu=mu, sigma=sigma):
            _zi_summary(row, ZIModel.from_musigma(p, mu, sigma), cfg)

        rows.append(_soft(work, {"label": label, "p": p, "mu": mu, "sigma": sigma}))
    if cfg.stress_from_fit and cfg.flows is not None:
        records = _records(cfg)
        flt = _filter(cfg)
        fitter = fit_mm if cfg.zi_method == "mm" else fit_mle
        for cell in cells_in(records):
            def work(row, cell=cell):
                fit = fitter(pool(records, cell, flt))
                row.update(p=fit.p, mu=fit.mu, sigma=fit.sigma)
                _zi_summary(row, fit.model, cfg)

            rows.append(_soft(work, {"label": cell.label()}))
    if not rows and cfg.coherency is None:
        raise ConfigError("stress needs [stress.triplets], [stress] from_fit or [coherency]")
    extra = {"T_grid": cfg.T_grid}
    if cfg.coherency is not None:
        c = dict(cfg.coherency)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            sm = coherency_shocks(c.pop("rule"), **c)
        extra["coherency"] = {"rule": sm.rule, "fund_categories": sm.fund_categories,
                              "investor_categories": sm.investor_categories,
                              "shocks": sm.shocks.tolist(), "coherent": sm.is_coherent(),
                              "clipped": [list(x) for x in sm.clipped],
                              "warnings": [str(w.message) for w in caught]}
        cfg.out_dir.mkdir(parents=True, exist_ok=True)
        if "csv" in cfg.formats:
            crow = [dict(fund_category=f, **{i: sm.shocks[j, k] for k, i in enumerate(sm.investor_categories)})
                    for j, f in enumerate(sm.fund_categories)]
            print(write_csv(cfg.out_dir / "coherency.csv", ["fund_category"] + sm.investor_categories, crow))
    cols = (["label", "p", "mu", "sigma", "model_mean", "model_variance", "model_var", "model_cvar",
             "implied_return_time"] + [_t_key(T) for T in cfg.T_grid] + ["note", "error", "warnings"])
    _emit(cfg, "stress", cols, rows, extra)
    if "csv" in cfg.formats:
        # long format for plotting stress against return time
        curve = [{"label": r["label"], "T_years": T, "stress": r[_t_key(T)]}
                 for r in rows if r.get("error") is None for T in cfg.T_grid]
        print(write_csv(cfg.out_dir / "stress_curve.csv", ["label", "T_years", "stress"], curve))
    return EXIT_OK


def _copula_from_cfg(cfg: RunConfig) -> CopulaSpec:
    fam = CopulaFamily(cfg.copula_family)
    if fam in (CopulaFamily.PRODUCT, CopulaFamily.UPPER_FRECHET):
        return CopulaSpec(fam)
    if cfg.copula_theta is not None:
        return CopulaSpec(fam, cfg.copula_theta).canonical()
    if cfg.copula_pearson is not None:
        return theta_from_pearson(fam, cfg.copula_pearson).canonical()
    raise ConfigError(f"[copula] {fam.value} needs theta or pearson")


def _model_from_cfg(cfg: RunConfig) -> IMModel:
    if cfg.model_weights is not None:
        st = LiabilityStructure.from_weights(cfg.model_weights)
    elif cfg.model_geometric_q is not None:
        st = geometric_structure(cfg.model_geometric_q, cfg.model_n)
    else:
        st = LiabilityStructure.equal(cfg.model_n)
    return IMModel(st, cfg.p_tilde, cfg.mu_tilde, cfg.sigma_tilde)


def cmd_simulate(cfg: RunConfig) -> int:
    try:
        model = _model_from_cfg(cfg)
        cop = _copula_from_cfg(cfg)
        sim = SimConfig(cfg.n_sims, cfg.seed, cfg.chunk_size)
    except (ValueError, RedStressError) as exc:
        raise ConfigError(str(exc)) from None
    draw = cm_draw(model, cop)
    if cfg.horizon_days == 1:
        values = run_chunks(draw, sim)
    else:
        values = aggregate_over_horizon(draw, cfg.horizon_days, cfg.rho_time, sim,
                                        calibration_draws=cfg.calibration_draws).values
    rep = mc_risk_measures(values, cfg.alpha, cfg.c, cfg.sim_T)
    row = {"model": "im" if cop.family is CopulaFamily.PRODUCT else "cm", "copula": cop.label(),
           "n_holders": model.n, "herfindahl": model.herfindahl, "p_tilde": model.p_tilde,
           "mu_tilde": model.mu_tilde, "sigma_tilde": model.sigma_tilde,
           "horizon_days": cfg.horizon_days, "rho_time": cfg.rho_time,
           "seed": cfg.seed, "n_sims": cfg.n_sims}
    row.update(rep.as_dict())
    if cfg.horizon_days == 1:
        an = cm_stats(model, cop)
        row.update(analytic_prob_zero=an.prob_no_redemption, analytic_mean=an.mean,
                   analytic_variance=an.variance)
    cols = ["model", "copula", "n_holders", "herfindahl", "p_tilde", "mu_tilde", "sigma_tilde",
            "horizon_days", "rho_time", "seed", "n_sims", "n", "alpha", "c", "mean", "se_mean",
            "sd_measure", "se_sd_measure", "var", "se_var", "cvar", "se_cvar", "ratio",
            "variance", "se_variance", "prob_zero", "se_prob_zero", "analytic_prob_zero",
            "analytic_mean", "analytic_variance", "T_years", "stress"]
    _emit(cfg, "simulate", cols, [row])
    if cfg.dump_sample:
        path = cfg.out_dir / "simulate_sample.csv"
        np.savetxt(path, values, fmt="%.17g", header="rate", comments="")
        print(path)
    return EXIT_OK


def cmd_factors(cfg: RunConfig) -> int:
    records = _records(cfg)
    flt = _filter(cfg)
    fs = vix = None
    if cfg.bond and cfg.stock and cfg.vix:
        levels = [read_factor_csv(p) for p in (cfg.bond, cfg.stock, cfg.vix)]
        fs = factor_series_from_levels(*levels, h=cfg.factor_h)
        vix = levels[2]
    rows = []
    for cell in cells_in(records):
        s = daily_series(records, cell, flt, cfg.tna_weighted)

        def work(row, s=s):
            row["n_days"] = len(s)
            ac = autocorrelation(s, cfg.acf_max_order)
            row.update({f"acf_{h + 1}": r for h, r in enumerate(ac.rho)})
            row.update(acf_max=ac.max_rho, acf_max_order=ac.max_order, acf_significant=ac.significant)
            try:
                d = decomposition_fits(s)
                row.update(r2_frequency=d.frequency.centered_r2, r2_severity=d.severity.centered_r2,
                           r2_joint=d.joint.centered_r2)
            except RedStressError as exc:
                row["note"] = str(exc)
            if fs is not None:
                mf = macro_fit(s, fs)
                row.update(macro_n=mf.n_obs, macro_r2=mf.centered_r2,
                           **{f"{k}_coef": mf.coef(k) for k in ("bond", "stock", "vol")},
                           **{f"{k}_t": mf.t(k) for k in ("bond", "stock", "vol")})
                vd = sorted(vix)
                row["vix_uplift"] = vix_conditional(s, [vix[d] for d in vd], cfg.vix_threshold, vd)

        rows.append(_soft(work, _cell_row(cell)))
    cols = (["investor_category", "fund_category", "n_days"]
            + [f"acf_{h}" for h in range(1, cfg.acf_max_order + 1)]
            + ["acf_max", "acf_max_order", "acf_significant", "r2_frequency", "r2_severity",
               "r2_joint", "macro_n", "macro_r2", "bond_coef", "stock_coef", "vol_coef",
               "bond_t", "stock_t", "vol_t", "vix_uplift", "note", "error", "warnings"])
    _emit(cfg, "factors", cols, rows, {"h": cfg.factor_h, "vix_threshold": cfg.vix_threshold})
    return EXIT_OK


COMMANDS = {
    "stats": (cmd_stats, ("flows",)),
    "fit-zi": (cmd_fit_zi, ("flows",)),
    "fit-im": (cmd_fit_im, ("flows",)),
    "fit-copula": (cmd_fit_copula, ("flows",)),
    "stress": (cmd_stress, ()),
    "simulate": (cmd_simulate, ()),
    "factors": (cmd_factors, ("flows",)),
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="redstress", description="Liquidity stress testing of fund redemptions.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="INI configuration file")
        sp.add_argument("--input", help="flow CSV (overrides [input] flows)")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--alpha", type=float)
        sp.add_argument("--format", choices=("csv", "json"), help="single output format (default: both)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    fn, need = COMMANDS[args.command]
    try:
        cfg = apply_overrides(load_config(args.config), args)
        if args.command == "stress" and cfg.stress_from_fit:
            need = ("flows",)
        cfg.validate(need)
        return fn(cfg)
    except (ConfigError, IngestError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL
    except RedStressError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
