import argparse
import os
import sys
from dataclasses import replace
from importlib import metadata
from typing import List, Optional

import numpy as np

from src.config import EstimatorSettings, load_runtime_env, load_sim_config
from src.cv_tuner import tune_lambda
from src.data import Dataset, predict
from src.errors import ConfigError, DpdLassoError, InvalidParams
from src.estimator import TRACE_COLUMNS, fit_dpd_lasso
from src.simulation import (
    CONTOUR_BETA, SIM_COLUMNS, SUMMARY_COLUMNS, GridSpec, contour_scenario, loss_surface, run_sweep, summarize,
)
from src.storage import read_dataset, read_features, read_model_fit, write_csv, write_json, write_model_fit
from src.utils import DEBUG, INFO, QUIET, fmt_float, log, parse_float_list, set_verbosity

EXIT_OK, EXIT_INPUT, EXIT_WARN = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    # argparse sai com 2 por padrão; aqui 2 = "terminou com avisos"
    def error(self, message):
        raise ConfigError(message)


def _lambda_arg(text: str):
    if text == "auto":
        return text
    try:
        lam = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"lambda inválido: {text}")
    if lam < 0:
        raise argparse.ArgumentTypeError("lambda precisa ser >= 0")
    return lam


def print_startup_diags(args, env: dict):
    log("Diag", "=== Startup diagnostics ===", DEBUG)
    log("Diag", f"subcommand={args.subcommand} seed={args.seed} n_jobs={args.n_jobs}", DEBUG)
    log("Diag", f"DPDLASSO_CONFIG={env['config_path']}", DEBUG)
    for pkg in ("numpy", "scipy", "pydantic"):
        try:
            log("Diag", f"{pkg}=={metadata.version(pkg)}", DEBUG)
        except metadata.PackageNotFoundError:
            log("Diag", f"{pkg}=N/A", DEBUG)


def _settings(args, lam: float) -> EstimatorSettings:
    return EstimatorSettings(
        alpha=args.alpha, lam=lam, tol=args.tol, max_iter=args.max_iter, init=args.init, seed=args.seed,
        scale=args.scale,
    )


def _tune(args, data: Dataset):
    settings = _settings(args, 0.0)
    return tune_lambda(
        data, args.alpha, args.folds, args.grid_size, args.seed, settings, n_jobs=args.n_jobs, select=args.select,
    )


# =================== Subcomandos ===================
def cmd_fit(args) -> int:
    data = read_dataset(args.data, args.response)
    lam = args.lam
    if lam == "auto":
        cv = _tune(args, data)
        lam = cv.best_lambda
        log("FIT", f"lambda auto (CV {args.folds}-fold) = {fmt_float(lam)}")
    fit, trace = fit_dpd_lasso(data, _settings(args, lam))
    write_model_fit(args.output, fit)
    if args.trace:
        write_csv(args.trace, TRACE_COLUMNS, trace.to_rows())
    nnz = int(np.count_nonzero(fit.coef))
    log("FIT", f"alpha={fit.alpha} lambda={fmt_float(fit.lam)} iter={fit.n_iter} "
               f"converged={fit.converged} nnz={nnz}/{data.p} sigma2={fit.sigma2:.6g}")
    if not fit.converged:
        log("FIT", f"não convergiu em {args.max_iter} iterações; ajuste salvo mesmo assim")
        return EXIT_WARN
    return EXIT_OK


def cmd_predict(args) -> int:
    fit = read_model_fit(args.model)
    X = read_features(args.data, fit)
    yhat = predict(fit, X)
    write_csv(args.output, ["row", "prediction"], ([i, float(v)] for i, v in enumerate(yhat)))
    log("PREDICT", f"{len(yhat)} previsões -> {args.output}")
    return EXIT_OK


def cmd_cv(args) -> int:
    data = read_dataset(args.data, args.response)
    cv = _tune(args, data)
    header = ["lambda", "cv_error"] + (["trimmed_cv_error"] if args.trimmed_cv else [])
    rows = cv.to_rows() if args.trimmed_cv else [r[:2] for r in cv.to_rows()]
    write_csv(args.output, header, rows)
    payload = cv.to_dict()
    if not args.trimmed_cv:
        payload.pop("trimmed_cv_error", None)
    write_json(args.json or os.path.splitext(args.output)[0] + ".json", payload)
    if args.folds_out and cv.best_folds is not None:
        write_csv(args.folds_out, ["row", "fold", "stratum"], cv.best_folds.to_rows())
    print(fmt_float(cv.best_lambda))
    n_bad = int(cv.n_not_converged.sum()) if cv.n_not_converged is not None else 0
    log("CV", f"best_lambda={fmt_float(cv.best_lambda)} (índice {cv.best_index}/{len(cv.lambda_grid)}), "
              f"ajustes internos sem convergir={n_bad}")
    if cv.best_fit is not None and not cv.best_fit.converged:
        return EXIT_WARN
    return EXIT_OK


def cmd_simulate(args, env: dict) -> int:
    overrides = {"rng_seed": args.seed} if args.seed_given else {}
    if args.n_reps is not None:
        overrides["n_reps"] = args.n_reps
    config = load_sim_config(args.config or env["config_path"], overrides)
    records = run_sweep(config, n_jobs=args.n_jobs)
    if not args.timing:
        # tempo de parede quebra a reprodutibilidade byte a byte
        records = [replace(r, runtime_ms=float("nan")) for r in records]
    write_csv(args.output, SIM_COLUMNS, (r.to_row() for r in records))
    write_csv(args.summary, SUMMARY_COLUMNS, summarize(records))
    failed = [r for r in records if not r.ok]
    log("SIM", f"{len(records)} linhas -> {args.output}; resumo -> {args.summary}; falhas={len(failed)}")
    return EXIT_WARN if failed else EXIT_OK


def cmd_contour(args) -> int:
    grid = GridSpec.from_string(args.grid)
    alphas = parse_float_list(args.alpha)
    if not alphas or any(a < 0 for a in alphas):
        raise InvalidParams(f"lista de alpha inválida: {args.alpha}")
    data, _ = contour_scenario(args.contamination, args.seed)
    os.makedirs(args.output_dir, exist_ok=True)
    if args.data_out:
        write_csv(args.data_out, ["x1", "x2", "y"], np.column_stack([data.X, data.y]).tolist())
    summary = []
    for a in alphas:
        surf = loss_surface(data, a, grid)
        path = os.path.join(args.output_dir, f"surface_alpha_{a:g}.csv")
        write_csv(path, ["beta1", "beta2", "loss"], surf.to_rows())
        b1, b2 = surf.argmin
        dist = surf.distance_to(CONTOUR_BETA)
        summary.append([a, b1, b2, surf.min_value, dist])
        kind = "LS" if a == 0 else f"Q_{a:g}"
        log("CONTOUR", f"c={args.contamination:g} {kind}: argmin=({b1:.4g}, {b2:.4g}) dist(5,-5)={dist:.4f}")
    write_csv(os.path.join(args.output_dir, "summary.csv"),
              ["alpha", "argmin_beta1", "argmin_beta2", "min_loss", "distance_to_truth"], summary)
    return EXIT_OK


# =================== CLI ===================
def build_parser(env: dict) -> argparse.ArgumentParser:
    p = _Parser(prog="python -m src.main", description="DPD-Lasso: regressão esparsa robusta")
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("-q", "--quiet", action="store_true")
    sub = p.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--seed", type=int, default=None, help="(CLI > env:DPDLASSO_SEED > default)")
        sp.add_argument("--n-jobs", type=int, default=env["n_jobs"])

    def estimator_flags(sp):
        sp.add_argument("--data", required=True, help="CSV com cabeçalho")
        sp.add_argument("--response", required=True, help="nome da coluna resposta")
        sp.add_argument("--alpha", type=float, default=1.0)
        sp.add_argument("--tol", type=float, default=1e-6)
        sp.add_argument("--max-iter", type=int, default=100)
        sp.add_argument("--init", choices=["screened", "lasso_cv", "lasso_fixed", "ols"], default="screened")
        sp.add_argument("--scale", choices=["divergence", "mse"], default="divergence",
                        help="regra de atualização de sigma2")
        sp.add_argument("--select", choices=["mse", "trimmed"], default="mse", help="critério de escolha do lambda")
        sp.add_argument("--folds", type=int, default=5)
        sp.add_argument("--grid-size", type=int, default=50)

    sp = sub.add_parser("fit", help="ajusta o DPD-Lasso")
    estimator_flags(sp)
    sp.add_argument("--lambda", dest="lam", type=_lambda_arg, required=True, help="valor >= 0 ou 'auto'")
    sp.add_argument("--output", default="fit.json")
    sp.add_argument("--trace", default=None, help="CSV do traço de iterações")
    common(sp)

    sp = sub.add_parser("predict", help="previsões a partir de um fit.json")
    sp.add_argument("--model", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--output", default="predictions.csv")
    common(sp)

    sp = sub.add_parser("cv", help="CV estratificada por l-score p/ escolher lambda")
    estimator_flags(sp)
    sp.add_argument("--output", default="cv.csv")
    sp.add_argument("--json", default=None)
    sp.add_argument("--folds-out", default=None, help="CSV com os folds do melhor lambda")
    sp.add_argument("--trimmed-cv", action="store_true", help="reporta também a média aparada 10%%")
    common(sp)

    sp = sub.add_parser("simulate", help="benchmark contaminado (replicações)")
    sp.add_argument("--config", default=None, help="arquivo key = value")
    sp.add_argument("--n-reps", type=int, default=None)
    sp.add_argument("--output", default="sim_results.csv")
    sp.add_argument("--summary", default="sim_summary.csv")
    sp.add_argument("--timing", action="store_true", help="grava runtime_ms (saída deixa de ser byte-estável)")
    common(sp)

    sp = sub.add_parser("contour", help="superfícies de perda 2-D")
    sp.add_argument("--contamination", type=float, default=0.10)
    sp.add_argument("--alpha", default="0,0.25,0.5,1,2", help="lista; 0 = mínimos quadrados")
    sp.add_argument("--grid", default="-10:10:401", help="min:max:steps por eixo")
    sp.add_argument("--output-dir", default="contour")
    sp.add_argument("--data-out", default=None)
    common(sp)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    try:
        env = load_runtime_env()
        args = build_parser(env).parse_args(argv)
        set_verbosity(QUIET if args.quiet else DEBUG if args.verbose else INFO)
        args.seed_given = getattr(args, "seed", None) is not None
        if not args.seed_given:
            args.seed = env["seed"]
        print_startup_diags(args, env)
        if args.subcommand == "fit":
            return cmd_fit(args)
        if args.subcommand == "predict":
            return cmd_predict(args)
        if args.subcommand == "cv":
            return cmd_cv(args)
        if args.subcommand == "simulate":
            return cmd_simulate(args, env)
        return cmd_contour(args)
    except DpdLassoError as e:
        log("ERRO", str(e), QUIET)
        return e.exit_code
    except ValueError as e:
        # pydantic.ValidationError herda de ValueError
        log("ERRO", str(e), QUIET)
        return EXIT_INPUT
    except OSError as e:
        log("ERRO", f"{e.filename or ''}: {e.strerror or e}", QUIET)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
