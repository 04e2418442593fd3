"""Command-line entry points.

Subcommands:
    quiz serve      run the HTTP quiz service
    quiz simulate   generate synthetic response logs (and exam data)
    quiz calibrate  fit response models to a log and report bank diagnostics
    quiz analyze    fit and backward-eliminate the crossover mixed model
    quiz pmf        print the allocation distribution as CSV (optionally plot)
    quiz rank       print a bank's difficulty ranking as CSV
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import crossover, irt, simulate
from .allocation import AllocationPolicy, allocation_pmf
from .bank import load_bank, read_log, replay
from .service import ServiceConfig, build_service, create_app


def _cmd_serve(args) -> int:
    import uvicorn

    config = ServiceConfig.from_file(args.config)
    if args.host:
        config.host = args.host
    if args.port:
        config.port = args.port
    service = build_service(config)
    app = create_app(service)
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")
    return 0


def _cmd_simulate(args) -> int:
    with open(args.config, "r", encoding="utf-8") as fh:
        config = simulate.SimConfig.from_json(fh.read())
    result = simulate.run_sessions(config)
    with open(args.out, "w", encoding="utf-8") as fh:
        for rec in result.records:
            fh.write(rec.to_json() + "\n")
    print(f"wrote {len(result.records)} responses to {args.out}", file=sys.stderr)
    if args.bank_out:
        from .bank import save_bank

        save_bank(result.bank, args.bank_out)
        print(f"wrote bank {result.bank.bank_id!r} to {args.bank_out}", file=sys.stderr)
    if args.exams:
        exams = simulate.simulate_crossover(config)
        crossover.write_exams_csv(exams, args.exams)
        print(f"wrote {len(exams)} exam records to {args.exams}", file=sys.stderr)
    return 0


def _model_to_dict(model: irt.IrtModel) -> dict:
    out = {
        "variant": model.variant,
        "item_ids": model.item_ids,
        "beta": [float(b) for b in model.beta],
        "loglik": model.loglik,
        "n_params": model.n_params,
        "n_quadrature": model.n_quadrature,
        "converged": model.converged,
        "flags": model.item_flags,
    }
    if model.variant == "m2":
        out["alpha"] = float(model.alpha)
    elif model.variant in ("m3", "m4"):
        out["alpha"] = [float(a) for a in model.alpha]
    if model.variant == "m4":
        out["guessing"] = [float(c) for c in model.guessing]
    return out


def _cmd_calibrate(args) -> int:
    bank = load_bank(args.bank)
    records = list(read_log(args.log))
    matrix = irt.ResponseMatrix.from_records(records, item_order=[it.item_id for it in bank.items])
    if matrix.n_cells == 0:
        print("error: log contains no responses for this bank", file=sys.stderr)
        return 1
    config = irt.FitConfig(n_quadrature=args.quadrature)

    document: dict = {}
    if args.variant == "auto":
        selection = irt.select_model(matrix, alpha=args.alpha, config=config)
        model = selection.model
        document["selection"] = [
            {"smaller": r.smaller, "larger": r.larger, "stat": r.stat, "df": r.df, "p_value": r.p_value}
            for r in selection.table
        ]
        print(f"selected variant: {model.variant}", file=sys.stderr)
    else:
        model = irt.fit(matrix, args.variant, config)
    if not model.converged:
        print("warning: optimizer did not converge; result is partial", file=sys.stderr)

    report = irt.average_student_report(model, bank)
    document["model"] = _model_to_dict(model)
    document["average_student"] = {
        "p_correct": [float(p) for p in report.p_correct],
        "histogram": [int(c) for c in report.histogram],
        "n_easy": report.n_easy,
        "n_hard": report.n_hard,
        "all_above_half": report.all_above_half,
    }
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(document, fh, indent=2)
        fh.write("\n")
    print(f"wrote model to {args.out}", file=sys.stderr)

    if args.report:
        alpha_vec = model.alpha_vector()
        guess_vec = model.guessing_vector()
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write("item_id,beta,alpha,c,p_avg\n")
            for i, item_id in enumerate(model.item_ids):
                c = 0.0 if guess_vec is None else guess_vec[i]
                fh.write(
                    f"{item_id},{model.beta[i]:.6f},{alpha_vec[i]:.6f},{c:.6f},{report.p_correct[i]:.6f}\n"
                )
        print(f"wrote per-item report to {args.report}", file=sys.stderr)
    print("histogram (10 bins over [0,1]): " + ",".join(str(int(c)) for c in report.histogram))
    if report.all_above_half:
        print("WARNING: every item is easier than a coin flip for the average student")
    print(f"easy/hard split (P(correct|avg) above vs below 0.5): {report.n_easy}/{report.n_hard}")
    return 0


def _cmd_analyze(args) -> int:
    records = crossover.read_exams_csv(args.exams)
    result = crossover.backward_eliminate(records, alpha=args.alpha)
    fit = result.fit

    print(f"observations: {fit.n_obs} from {fit.n_students} students")
    print("elimination trace:")
    for step in result.trace:
        action = "dropped" if step.dropped else "retained"
        print(f"  {step.term}: p = {step.p_value:.4f} -> {action}")
    print(f"final terms: {', '.join(result.terms)}")
    print("fixed effects:")
    for name, est in zip(fit.fixed_names, fit.fixed):
        print(f"  {name:35s} {est:9.4f}  (se {fit.se(name):.4f})")
    print(f"variance components: student {fit.sigma_b2:.4f}, residual {fit.sigma2:.4f}")
    print(f"log-likelihood: {fit.loglik:.4f}")

    ci = None
    if "treatment[tutorweb]" in fit.fixed_names:
        ci = crossover.treatment_ci(fit, level=args.level)
        print(f"treatment effect {args.level:.0%} CI: ({ci[0]:.4f}, {ci[1]:.4f})")
    else:
        trt_fit = crossover.fit_terms(records, ("treatment", "math", "exam"))
        ci = crossover.treatment_ci(trt_fit, level=args.level)
        print(
            f"treatment dropped; {args.level:.0%} CI from the model including it: "
            f"({ci[0]:.4f}, {ci[1]:.4f})"
        )

    if args.json:
        document = {
            "trace": [
                {"term": s.term, "p_value": s.p_value, "dropped": s.dropped} for s in result.trace
            ],
            "final_terms": list(result.terms),
            "fixed": dict(zip(fit.fixed_names, map(float, fit.fixed))),
            "se": {name: fit.se(name) for name in fit.fixed_names},
            "sigma_student2": fit.sigma_b2,
            "sigma_resid2": fit.sigma2,
            "loglik": fit.loglik,
            "treatment_ci": {"level": args.level, "low": ci[0], "high": ci[1]},
        }
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(document, fh, indent=2)
            fh.write("\n")
        print(f"wrote JSON report to {args.json}", file=sys.stderr)
    return 0


def _cmd_pmf(args) -> int:
    policy = AllocationPolicy(q=args.q, m=args.m)
    p = allocation_pmf(policy, args.items, args.grade)
    print("rank,probability")
    for r, prob in enumerate(p, start=1):
        print(f"{r},{prob:.12g}")
    if args.plot:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(7, 4))
        ax.bar(np.arange(1, args.items + 1), p, width=1.0, edgecolor="none")
        ax.set_xlabel("difficulty rank (easy to hard)")
        ax.set_ylabel("allocation probability")
        ax.set_title(f"I={args.items}, q={args.q}, m={args.m}, grade={args.grade}")
        fig.tight_layout()
        fig.savefig(args.plot, dpi=120)
        print(f"wrote plot to {args.plot}", file=sys.stderr)
    return 0


def _cmd_rank(args) -> int:
    from .bank import empirical_difficulty, rank_by_difficulty

    bank = load_bank(args.bank)
    if args.log:
        replay(read_log(args.log), {bank.bank_id: bank})
    ranking = rank_by_difficulty(bank)
    print("rank,item_id,difficulty,times_answered,times_correct")
    for r, item_id in enumerate(ranking, start=1):
        item = bank.item(item_id)
        print(
            f"{r},{item_id},{empirical_difficulty(item):.6f},{item.times_answered},{item.times_correct}"
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="quiz", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run the HTTP quiz service")
    p.add_argument("--config", required=True, help="service config JSON")
    p.add_argument("--host", default=None)
    p.add_argument("--port", type=int, default=None)
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("simulate", help="generate synthetic quiz/exam data")
    p.add_argument("--config", required=True, help="simulation config JSON")
    p.add_argument("--out", required=True, help="response log output (JSON lines)")
    p.add_argument("--bank-out", default=None, help="also write the synthesized bank JSON")
    p.add_argument("--exams", default=None, help="also write crossover exam CSV")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("calibrate", help="fit response models to a log")
    p.add_argument("--log", required=True, help="response log (JSON lines)")
    p.add_argument("--bank", required=True, help="bank JSON file")
    p.add_argument("--variant", default="auto", choices=["auto", "m1", "m2", "m3", "m4"])
    p.add_argument("--out", required=True, help="fitted model JSON output")
    p.add_argument("--report", default=None, help="per-item CSV report output")
    p.add_argument("--alpha", type=float, default=0.05, help="selection significance level")
    p.add_argument("--quadrature", type=int, default=21, help="Gauss-Hermite node count")
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("analyze", help="crossover mixed-model analysis")
    p.add_argument("--exams", required=True, help="exam CSV (student_id,exam,treatment,math,score)")
    p.add_argument("--alpha", type=float, default=0.05, help="elimination significance level")
    p.add_argument("--level", type=float, default=0.95, help="confidence level for the treatment CI")
    p.add_argument("--json", default=None, help="also write the report as JSON")
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("pmf", help="print the allocation distribution")
    p.add_argument("--items", type=int, required=True)
    p.add_argument("--grade", type=float, required=True)
    p.add_argument("--q", type=float, default=0.85)
    p.add_argument("--m", type=float, default=0.5)
    p.add_argument("--plot", default=None, help="write a bar plot PNG")
    p.set_defaults(func=_cmd_pmf)

    p = sub.add_parser("rank", help="rank a bank by empirical difficulty")
    p.add_argument("--bank", required=True, help="bank JSON file")
    p.add_argument("--log", default=None, help="response log to derive counters from")
    p.set_defaults(func=_cmd_rank)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
