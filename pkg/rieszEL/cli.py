"""Command line front end of rieszEL.

Every subcommand shares the output flags (--out, --seed, --json,
--load_config, --logger) and, where it needs one, the kernel flags. A JSON
file given with --load_config overrides the defaults of the subcommand and
the command line overrides the file. Library errors are turned into exit
codes here and nowhere else.

Exit codes:
    0   success or clean verdict
    1   verified negative verdict
    2   usage or precondition error
    3   jump detected (regularity)
"""
import argparse
import dataclasses
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Callable, Dict, List, Tuple

import pytorch_lightning as pl
from pytorch_lightning.utilities.rank_zero import rank_zero_info

import rieszEL
from rieszEL.common.errors import (ConfigError, OscillatoryRatioError,
                                   PreconditionError, RieszError)
from rieszEL.common.kernels import (Kernel, PowerLaw, Tabulated,
                                    certify_hypotheses,
                                    check_tail_integrability,
                                    estimate_lambda, load_kernel_spec)
from rieszEL.common.measures import GridDensity, essential_limits
from rieszEL.common.mollifiers import (derivative_bound_check, mollify,
                                       potential_commutation_check)
from rieszEL.common.potentials import potential_profile
from rieszEL.common.utils import (ensure_dir, make_generator, to_jsonable,
                                  write_json)
from rieszEL.regularity.cancellation import (LEMMAS, is_violation,
                                             replay_instance, run_instance,
                                             sweep)
from rieszEL.regularity.continuity import continuity_report
from rieszEL.regularity.ladder import CASES, WINDOW_FRACTIONS, build_ladder
from rieszEL.regularity.second_derivative import (
    find_critical_points, psi_second_derivative_at_critical)
from rieszEL.regularity.smooth_functions import SmoothFunction, TestFunction
from rieszEL.solver import (METHOD_ALIASES, SolveConfig, boundedness_check,
                            run_solver, summarize, verify_el)

SWEEP_KERNELS = [(a, l) for a in (2.0, 3.0) for l in (-0.5, 0.0, 0.5)]
_UNHASHED = ('out', 'json', 'logger', 'load_config', 'project')
_SOLVER_FIELDS = ('method', 'max_iters', 'step0', 'el_tol', 'N',
                  'inner_steps', 'substeps', 'bandwidth', 'record_every')


@dataclass
class RunManifest:
    """Provenance of one command run, written to manifest.json.

    Attributes:
        command (str): Subcommand name
        argv (List[str]): Raw arguments
        config_hash (str): sha256 of the canonical JSON of resolved arguments
        kernel (dict): Kernel spec, if the command uses one
        seed (int): Seed
        version (str): rieszEL version
        started (str): UTC start time
        finished (str): UTC end time
        outputs (List[str]): Files written, relative to --out
    """
    command: str
    argv: List[str]
    config_hash: str
    kernel: dict = None
    seed: int = None
    version: str = rieszEL.__version__
    started: str = None
    finished: str = None
    outputs: List[str] = field(default_factory=list)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def config_hash(args: argparse.Namespace) -> str:
    """Digest of the resolved arguments; output and logging flags excluded."""
    resolved = {
        k: v
        for k, v in vars(args).items()
        if k not in _UNHASHED and not callable(v)
    }
    blob = json.dumps(to_jsonable(resolved), sort_keys=True)
    return hashlib.sha256(blob.encode('utf-8')).hexdigest()


class Run:
    """Output side of a command: files under --out and the JSON report.

    Attributes:
        args (argparse.Namespace): Resolved arguments
        manifest (RunManifest): Manifest being filled
    """
    def __init__(self, args: argparse.Namespace, argv: List[str]) -> None:
        self.args = args
        self.manifest = RunManifest(args.command, list(argv),
                                    config_hash(args), seed=args.seed,
                                    started=_now())
        if args.out:
            ensure_dir(args.out)

    def path(self, name: str) -> str:
        """Absolute path of an output file, or None without --out."""
        if not self.args.out:
            return None
        self.manifest.outputs.append(name)
        return os.path.join(self.args.out, name)

    def write(self, name: str, writer: Callable[[str], None]) -> None:
        path = self.path(name)
        if path is not None:
            writer(path)

    def report(self, name: str, payload: dict, summary: str) -> None:
        self.write(name, lambda p: write_json(p, payload))
        if self.args.json:
            print(json.dumps(to_jsonable(payload), indent=4, sort_keys=True))
        else:
            print(summary)

    def close(self) -> None:
        self.manifest.finished = _now()
        self.write('manifest.json',
                   lambda p: write_json(p, dataclasses.asdict(self.manifest)))


def make_kernel(args: argparse.Namespace) -> Kernel:
    if args.spec:
        return load_kernel_spec(args.spec)
    if args.tabulated:
        return Tabulated.from_csv(args.tabulated)
    return PowerLaw(args.alpha, args.lam)


def make_logger(args: argparse.Namespace):
    """WandbLogger for --logger wandb, None for the CSV default."""
    if args.logger != 'wandb':
        return None
    try:
        from pytorch_lightning.loggers import WandbLogger
        return WandbLogger(project=args.project, save_dir=args.out or '.')
    except (ImportError, ModuleNotFoundError) as e:
        raise ConfigError(f"--logger wandb needs wandb installed: {e}") \
            from None


def load_density(args: argparse.Namespace) -> GridDensity:
    if not args.density:
        raise ConfigError("--density is required")
    return GridDensity.from_csv(args.density)


def solve_config(args: argparse.Namespace) -> SolveConfig:
    """Method defaults < --load_config file < command line."""
    method = args.method or 'grid'
    if method not in METHOD_ALIASES:
        raise ConfigError(f"unknown method {method!r}")
    d = SolveConfig.defaults(method).to_dict()
    for name in _SOLVER_FIELDS:
        value = getattr(args, name, None)
        if value is not None:
            d[name] = value
    if getattr(args, 'grid', None) is not None:
        d['grid'] = list(args.grid)
    if args.window is not None:
        d['grid'][:2] = args.window
    if args.n is not None:
        d['grid'][2] = args.n
    d['seed'] = args.seed
    return SolveConfig.from_dict(d)


def cmd_check_kernel(args: argparse.Namespace, run: Run) -> int:
    k = make_kernel(args)
    run.manifest.kernel = k.spec()
    cert = certify_hypotheses(k, args.probes)
    report = {'certificate': cert.to_dict()}
    try:
        est = estimate_lambda(k, k.r / 2, args.levels)
        report['Lambda'] = est._asdict()
    except OscillatoryRatioError as e:
        report['Lambda'] = {'flag': 'oscillatory',
                            'running_min': e.running_min}
    report['integrability'] = check_tail_integrability(k, k.r)._asdict()
    failed = [n for n, c in cert.clauses.items() if c.status != 'pass']
    run.report('check_kernel.json', report,
               f"{k.name}: r={cert.r:.6g} Lambda={cert.Lambda:.6g} "
               f"LambdaBar={cert.LambdaBar:.6g} "
               + ("all clauses pass" if cert.passed else
                  f"failed: {', '.join(failed)}"))
    return 0 if cert.passed else 1


def cmd_minimize(args: argparse.Namespace, run: Run) -> int:
    k = make_kernel(args)
    run.manifest.kernel = k.spec()
    cfg = solve_config(args)
    module = run_solver(k, cfg, args.out, make_logger(args))
    result, el = summarize(k, cfg, module)
    if isinstance(result, GridDensity):
        run.write('density.csv', result.to_csv)
        density = result
    else:
        run.write('particles.csv', result.to_csv)
        density = None
    if len(module.trajectory):
        run.write('trajectory.csv', module.trajectory.to_csv)
    if density is not None:
        run.write('potential.csv', lambda p: potential_profile(
            k, density, density.x, el.support_interval).to_csv(p))
    report = {'config': cfg.validate().to_dict(), 'kernel': k.spec(),
              'iterations': module.iterations,
              'converged': module.converged, 'el': el.to_dict()}
    passed = el.passed
    if args.check_boundedness:
        report['boundedness'] = boundedness_check(k, cfg)
        passed = passed and report['boundedness']['bounded']
    run.report('el_report.json', report,
               f"{cfg.validate().method}: {module.iterations} iterations, "
               f"energy {el.energy:.9g}, EL residual {el.el_residual:.3g} "
               + ("(pass)" if el.passed else "(fail)"))
    return 0 if passed else 1


def cmd_verify_el(args: argparse.Namespace, run: Run) -> int:
    k = make_kernel(args)
    run.manifest.kernel = k.spec()
    f = load_density(args)
    el = verify_el(k, f, args.tol)
    run.write('potential.csv', lambda p: potential_profile(
        k, f, f.x, el.support_interval).to_csv(p))
    run.report('el_report.json', el.to_dict(),
               f"EL residual {el.el_residual:.3g}, min psi off support "
               f"{el.psi_min_off_support:.9g} vs mean "
               f"{el.psi_mean_on_support:.9g}: "
               + ("pass" if el.passed else "fail"))
    return 0 if el.passed else 1


def cmd_mollify(args: argparse.Namespace, run: Run) -> int:
    f = load_density(args)
    fd = mollify(f, args.delta, args.refine)
    run.write('mollified.csv', fd.to_csv)
    report = {'delta': args.delta, 'n': fd.n, 'a': fd.a, 'b': fd.b,
              'mass': fd.mass, 'M': fd.M}
    if args.check_bound:
        report['max_derivative'] = derivative_bound_check(f, args.delta)
        report['derivative_bound'] = 2 * f.M / args.delta
    if args.commutation:
        k = make_kernel(args)
        run.manifest.kernel = k.spec()
        gap, err = potential_commutation_check(k, f, args.delta,
                                               args.commutation)
        report['commutation'] = {'discrepancy': gap, 'error_bound': err}
    run.report('mollify.json', report,
               f"mollified at delta={args.delta:g}: {fd.n} nodes on "
               f"[{fd.a:g}, {fd.b:g}], mass {fd.mass:.9g}")
    return 0


def cmd_second_derivative(args: argparse.Namespace, run: Run) -> int:
    k = make_kernel(args)
    run.manifest.kernel = k.spec()
    if args.function:
        F = SmoothFunction.load(args.function)
    elif args.density and args.delta:
        F = SmoothFunction.from_density(mollify(load_density(args),
                                                args.delta))
    else:
        raise ConfigError("need --function, or --density with --delta")
    xs = args.x if args.x else find_critical_points(F)
    if len(xs) == 0:
        raise PreconditionError("no interior critical point found")
    results = [psi_second_derivative_at_critical(k, F, x, args.h) for x in xs]
    agree = all(res.agree for res in results)
    run.report('second_derivative.json',
               {'points': [res.to_dict() for res in results], 'agree': agree},
               f"{len(results)} critical points, forms "
               + ("agree" if agree else "disagree"))
    return 0 if agree else 1


def _replay(args: argparse.Namespace, run: Run) -> int:
    try:
        with open(args.replay, 'rt') as f:
            payload = json.load(f)
    except (OSError, ValueError) as e:
        raise ConfigError(f"cannot read {args.replay}: {e}") from None
    if isinstance(payload, dict):
        payload = payload.get('violations', [payload])
    results = []
    for inst in payload:
        res = replay_instance(inst)
        results.append({'lemma': inst.get('lemma'), 'result': res.to_dict(),
                        'violated': is_violation(res)})
    bad = sum(r['violated'] for r in results)
    run.report('replay.json', {'instances': results},
               f"replayed {len(results)} instances, {bad} violations")
    return 1 if bad else 0


def _check_function(args: argparse.Namespace, run: Run) -> int:
    if args.lemma == 'all':
        raise ConfigError("--function needs a single --lemma")
    points = args.at or []
    needed = {'convex': 1, 'concave': 2, 'rearrangement': 0}[args.lemma]
    if len(points) != needed:
        raise ConfigError(f"--lemma {args.lemma} needs {needed} --at values, "
                          f"got {len(points)}")
    k = make_kernel(args)
    run.manifest.kernel = k.spec()
    F = TestFunction.load(args.function, args.critical)
    instance = {'lemma': args.lemma, 'kernel': k.spec(),
                'function': F.to_spec(), 'decompose': args.decompose}
    instance.update(zip(('x', 'y'), points))
    res = run_instance(k, instance)
    bad = is_violation(res)
    run.report('check_function.json',
               {'instance': instance, 'result': res.to_dict(),
                'violated': bad},
               f"{args.lemma} on {os.path.basename(args.function)}: "
               f"margin={res.margin:.6g}"
               + (" VIOLATED" if bad else ""))
    return 1 if bad else 0


def cmd_check_lemmas(args: argparse.Namespace, run: Run) -> int:
    if args.replay:
        return _replay(args, run)
    if args.function:
        return _check_function(args, run)
    if args.trials < 1:
        raise ConfigError(f"--trials must be positive, got {args.trials}")
    kernels = ([PowerLaw(a, l) for a, l in SWEEP_KERNELS]
               if args.kernel_sweep else [make_kernel(args)])
    if not args.kernel_sweep:
        run.manifest.kernel = kernels[0].spec()
    lemmas = LEMMAS if args.lemma == 'all' else (args.lemma, )
    rng = make_generator(args.seed)
    reports = [sweep(lemma, k, args.trials, rng, args.decompose)
               for k in kernels for lemma in lemmas]
    for lemma in lemmas:
        found = [v for rep in reports if rep.lemma == lemma
                 for v in rep.violations]
        if found:
            run.write(f'violations_{lemma}.json',
                      lambda p, found=found: write_json(
                          p, {'violations': found}))
    passed = all(rep.passed for rep in reports)
    count = sum(len(rep.violations) for rep in reports)
    run.report('check_lemmas.json',
               {'sweeps': [rep.to_dict() for rep in reports],
                'passed': passed},
               f"{len(reports)} sweeps of {args.trials} trials, "
               f"{count} violations")
    return 0 if passed else 1


def _ladder_hint(args: argparse.Namespace) -> dict:
    hint = {name: getattr(args, name) for name in ('epsilon', 'eta', 'delta')
            if getattr(args, name) is not None}
    if args.windows:
        hint['windows'] = args.windows
    return hint or None


def cmd_build_ladder(args: argparse.Namespace, run: Run) -> int:
    k = make_kernel(args)
    run.manifest.kernel = k.spec()
    f = load_density(args)
    ladder = build_ladder(k, f, args.xbar, args.case, _ladder_hint(args))
    run.report('ladder.json', ladder.to_dict(),
               f"{ladder.case} ladder at {ladder.xbar:g}: N={ladder.N}, "
               f"j={ladder.j}, gamma={ladder.gamma:.3g}, "
               + (f"violations: {', '.join(ladder.violations)}"
                  if ladder.violations else "all invariants hold"))
    return 1 if ladder.violations else 0


def cmd_regularity(args: argparse.Namespace, run: Run) -> int:
    k = make_kernel(args)
    run.manifest.kernel = k.spec()
    f = load_density(args)
    cfg = None
    if args.resolve:
        cfg = SolveConfig(grid=(f.a, f.b, f.n), el_tol=args.el_tol,
                          seed=args.seed).validate()
    report = continuity_report(k, f, args.points, args.refinements,
                               args.el_tol, cfg, args.case)
    flagged = [p['x'] for p in report.points if p.get('flagged')]
    run.report('regularity.json', report.to_dict(),
               "continuous at all scanned points"
               if report.verdict == 'continuous' else
               f"jump detected at {', '.join(f'{x:g}' for x in flagged)}")
    return report.exit_code


def cmd_essential_limits(args: argparse.Namespace, run: Run) -> int:
    f = load_density(args)
    windows = args.windows
    if not windows:
        room = min(args.xbar - f.a, f.b - args.xbar)
        windows = [room * s for s in WINDOW_FRACTIONS]
    jd = essential_limits(f, args.xbar, windows, args.discard)
    run.report('essential_limits.json', jd.to_dict(),
               f"at {jd.point:g}: left [{jd.l_L_minus:.6g}, "
               f"{jd.l_L_plus:.6g}], right [{jd.l_R_minus:.6g}, "
               f"{jd.l_R_plus:.6g}], h_L={jd.h_L:.3g} h_R={jd.h_R:.3g}")
    return 0


def _common_args() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(add_help=False)
    group = parser.add_argument_group("program_args")
    group.add_argument('--out', type=str, default=None,
                       help="directory for reports, CSVs and manifest.json")
    group.add_argument('--seed', type=int, default=42, help="experiment seed")
    group.add_argument('--json', action='store_true',
                       help="print the report JSON to stdout")
    group.add_argument('--load_config', type=str, default=None,
                       help="load from json file. Command line override.")
    group.add_argument('--logger', choices=('csv', 'wandb'), default='csv',
                       help="metrics logger of solver runs")
    group.add_argument('--project', type=str, default='rieszEL',
                       help="project name for wandb logs")
    return parser


def _kernel_args() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(add_help=False)
    group = parser.add_argument_group("kernel_args")
    group.add_argument('--alpha', type=float, default=2.0,
                       help="attractive exponent of the power law")
    group.add_argument('--lambda', dest='lam', type=float, default=0.0,
                       help="repulsive exponent of the power law")
    group.add_argument('--spec', type=str, default=None,
                       help="kernel spec JSON, overrides --alpha/--lambda")
    group.add_argument('--tabulated', type=str, default=None,
                       help="kernel table CSV with columns x,g,gprime")
    return parser


def _density_args() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument('--density', type=str, default=None,
                        help="density CSV with columns x,f")
    return parser


Command = Callable[[argparse.Namespace, Run], int]


def build_parser() -> Tuple[argparse.ArgumentParser, Dict[
        str, argparse.ArgumentParser]]:
    """Top-level parser and its subparsers by command name."""
    parser = argparse.ArgumentParser(
        prog='rieszEL',
        description="Kernels, minimizers and regularity diagnostics of 1-D "
        "attractive-repulsive interaction energies")
    parser.add_argument('--version', action='version',
                        version=rieszEL.__version__)
    sub = parser.add_subparsers(dest='command', required=True)
    common, kernel, density = _common_args(), _kernel_args(), _density_args()
    subs = {}

    def add(name: str, func: Command, help: str, parents):
        p = sub.add_parser(name, parents=[common] + parents, help=help)
        p.set_defaults(func=func)
        subs[name] = p
        return p

    p = add('check-kernel', cmd_check_kernel, "certify kernel hypotheses",
            [kernel])
    p.add_argument('--levels', type=int, default=40,
                   help="dyadic levels of the singularity ratio")
    p.add_argument('--probes', type=int, default=400,
                   help="number of certification probes")

    p = add('minimize', cmd_minimize, "minimize the interaction energy",
            [kernel])
    p.add_argument('--method', choices=sorted(METHOD_ALIASES), default=None,
                   help="grid or particles")
    p.add_argument('--window', type=float, nargs=2, default=None,
                   metavar=('A0', 'B0'), help="initial window")
    p.add_argument('--max_iters', type=int, default=None)
    p.add_argument('--step0', type=float, default=None)
    p.add_argument('--el_tol', type=float, default=None)
    p.add_argument('--record_every', type=int, default=None,
                   help="snapshot period in training steps, 0 for none")
    p.add_argument('--check-boundedness', dest='check_boundedness',
                   action='store_true',
                   help="also solve on the grid at n and 2n - 1 nodes and "
                   "compare sup f")
    rieszEL.reg_solvers['GridProjectedGradient'].add_model_specific_args(p)
    rieszEL.reg_solvers['ParticleFlow'].add_model_specific_args(p)
    # method config files hold the defaults
    p.set_defaults(n=None, inner_steps=None, N=None, substeps=None,
                   bandwidth=None)

    p = add('verify-el', cmd_verify_el,
            "check constancy of the potential on the support",
            [kernel, density])
    p.add_argument('--tol', type=float, default=1e-2)

    p = add('mollify', cmd_mollify, "mollify a density", [kernel, density])
    p.add_argument('--delta', type=float, required=True)
    p.add_argument('--refine', type=int, default=1,
                   help="output nodes per input cell")
    p.add_argument('--check-bound', dest='check_bound', action='store_true',
                   help="check max|f_delta'| <= 2M/delta")
    p.add_argument('--commutation', type=float, nargs='+', default=None,
                   help="points where psi of f_delta is compared with the "
                   "mollified psi of f")

    p = add('second-derivative', cmd_second_derivative,
            "psi'' at critical points in three forms", [kernel, density])
    p.add_argument('--function', type=str, default=None,
                   help="JSON {lo, hi, terms} or CSV with columns t,F")
    p.add_argument('--delta', type=float, default=None,
                   help="mollifier scale applied to --density")
    p.add_argument('--x', type=float, nargs='+', default=None,
                   help="critical points, all located ones by default")
    p.add_argument('--h', type=float, default=None, help="grid spacing")

    p = add('check-lemmas', cmd_check_lemmas,
            "randomized checks of the cancellation inequalities", [kernel])
    p.add_argument('--lemma', choices=('all', ) + LEMMAS, default='all')
    p.add_argument('--trials', type=int, default=1000)
    p.add_argument('--replay', type=str, default=None,
                   help="rerun dumped instances instead of sweeping")
    p.add_argument('--kernel-sweep', dest='kernel_sweep',
                   action='store_true',
                   help="sweep alpha in {2, 3} and lambda in {-0.5, 0, 0.5}")
    p.add_argument('--decompose', action='store_true',
                   help="check the change of variables on the monotone "
                   "pieces of convex instances")
    p.add_argument('--function', type=str, default=None,
                   help="check one test function (spec JSON or t,F CSV) "
                   "instead of sweeping")
    p.add_argument('--critical', nargs='+', choices=('alpha', 'beta'),
                   default=(), help="endpoints of a CSV function with F' = 0")
    p.add_argument('--at', type=float, nargs='+', default=None,
                   help="x (convex) or x y (concave) of --function")

    p = add('build-ladder', cmd_build_ladder,
            "critical-point ladder left of a jump", [kernel, density])
    p.add_argument('--xbar', type=float, default=0.0)
    p.add_argument('--case', choices=('auto', ) + CASES, default='auto')
    p.add_argument('--epsilon', type=float, default=None)
    p.add_argument('--eta', type=float, default=None)
    p.add_argument('--delta', type=float, default=None)
    p.add_argument('--windows', type=float, nargs='+', default=None,
                   help="essential-limit windows, strictly decreasing")

    p = add('regularity', cmd_regularity,
            "jump diagnostics of a critical density", [kernel, density])
    p.add_argument('--points', type=float, nargs='+', default=None)
    p.add_argument('--refinements', type=int, default=3)
    p.add_argument('--el_tol', type=float, default=1e-2)
    p.add_argument('--case', choices=('auto', ) + CASES, default='auto')
    p.add_argument('--resolve', action='store_true',
                   help="re-solve at 2n - 1 nodes per refinement")

    p = add('essential-limits', cmd_essential_limits,
            "essential one-sided limits at a point", [density])
    p.add_argument('--xbar', type=float, required=True)
    p.add_argument('--windows', type=float, nargs='+', default=None)
    p.add_argument('--discard', type=float, default=0.01)
    return parser, subs


def parse_args(argv: List[str]) -> argparse.Namespace:
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    if args.load_config:
        try:
            with open(args.load_config, 'rt') as f:
                loaded = json.load(f)
        except (OSError, ValueError) as e:
            raise ConfigError(f"cannot read {args.load_config}: {e}") \
                from None
        if not isinstance(loaded, dict):
            raise ConfigError(f"{args.load_config} must hold a JSON object")
        loaded.pop('command', None)
        loaded.pop('load_config', None)
        subs[args.command].set_defaults(**loaded)
        args = parser.parse_args(argv)
    return args


def main(argv: List[str] = None) -> int:
    """Runs one subcommand and returns its exit code."""
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    except RieszError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    pl.seed_everything(args.seed, workers=True)
    run = Run(args, argv)
    try:
        code = args.func(args, run)
    except RieszError as e:
        condition = getattr(e, 'condition', None)
        print(f"error: {e}" + (f" [{condition}]" if condition else ""),
              file=sys.stderr)
        code = e.exit_code
    run.close()
    rank_zero_info(f"{args.command} finished with exit code {code}")
    return code
