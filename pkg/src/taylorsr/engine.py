"""The evolutionary loop: hybrid fitness, tournament selection,
sensitivity-guided crossover and mutation, optional constant tuning,
elitism, and termination."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import optimize

from . import expr as ex
from .attribution import SensitivityReport, sampling_distribution, sensitivities
from .expr import Expr, LimitsExceeded, SymbolLibrary, random_expr, swap_subtrees
from .prior import TaylorPrior, taylor_loss_from_coeffs
from .problems import PdeProblem, phys_loss, phys_loss_from_coeffs, sample_collocation

FITNESS_EPS = 1e-12  # termination threshold on best fitness


def _shape_key(e: Expr) -> tuple:
    """Tree signature ignoring constant values (shapes are tuning equivalence
    classes)."""
    head = e.kind if e.kind != "const" else "C"
    tag = e.axis if e.kind == "var" else e.exponent if e.kind == "pow" else 0
    return (head, tag) + tuple(_shape_key(c) for c in e.children)


@dataclass
class GpConfig:
    population: int = 500
    p_cross: float = 0.9
    p_mut: float = 0.15
    lam: float = 1.0  # weight of the structure loss in the fitness
    beta: float = 0.5  # residual/structure balance in attribution
    temperature: float = 1.0
    order: int = 5  # Taylor order K
    n_anchors: int = 8
    n_collocation: int = 512
    tournament: int = 5
    elitism: int = 2
    max_generations: int = 200
    patience: int = 40  # stagnation allowance, in generations
    tune_constants: bool = True
    tune_top: int = 5  # leading distinct tree shapes tuned at full budget
    tune_budget: int = 200  # objective evaluations per tuning pass
    tune_points: int = 128  # collocation subsample for the tuning objective
    p_tune_rest: float = 0.03  # chance any other individual gets a cheap tune
    restart_after: Optional[int] = None  # generations without a >1% best-fitness
    # gain before the population is re-drawn from scratch (best-so-far is kept
    # aside); None disables restarts
    seed: int = 0
    max_depth: int = ex.MAX_DEPTH
    max_size: int = ex.MAX_SIZE
    init_depth: int = 5
    mutation_depth: int = 3
    use_prior: bool = True  # off: vanilla physics-only GP
    guided: bool = True  # off: uniform subtree sampling in operators
    attribution_points: int = 128  # collocation subsample used for masking deltas
    p_fresh: float = 0.1  # fraction of each generation drawn fresh for diversity

    def __post_init__(self):
        for p in (self.p_cross, self.p_mut, self.beta):
            if not 0.0 <= p <= 1.0:
                raise ValueError("probabilities and beta must lie in [0, 1]")
        if min(self.population, self.tournament, self.n_collocation, self.n_anchors) < 1:
            raise ValueError("sizes must be positive")


@dataclass
class Individual:
    expr: Expr
    phys: float
    taylor: float
    fitness: float
    birth: int = 0
    report: Optional[SensitivityReport] = None

    @property
    def complexity(self) -> int:
        return self.expr.size


class Evolution:
    """One seeded run of the loop over a fixed problem/prior/collocation set."""

    def __init__(
        self,
        problem: PdeProblem,
        prior: Optional[TaylorPrior],
        cfg: GpConfig,
        log_prior: Optional[TaylorPrior] = None,
    ):
        if cfg.use_prior and prior is None:
            raise ValueError("config enables the structure prior but none was given")
        self.problem = problem
        self.prior = prior if cfg.use_prior else None
        # structure-loss logging works even in ablation modes that ignore the prior
        self.log_prior = self.prior if self.prior is not None else (log_prior or prior)
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed)
        self.points = sample_collocation(problem, cfg.n_collocation, self.rng)
        self.att_points = self.points[: cfg.attribution_points]
        self.lib = SymbolLibrary(n_vars=problem.dim)
        self.log: list[dict] = []
        self._loss_cache: dict[Expr, tuple[float, float]] = {}
        self.tune_points = self.points[: max(1, cfg.tune_points)]
        if self.log_prior is not None:
            # One fused jet walk per fitness call: residual columns (order-2
            # slice) and prior-anchor columns share a tiled batch.  The walk
            # is overhead-bound per node, so fusing nearly halves its cost.
            self._fused_order = max(2, self.log_prior.order)
            self._fused = self._tile_with_anchors(self.points)
            # cheaper batch for the tuning objective, which Nelder-Mead floods
            self._fused_tune = self._tile_with_anchors(self.tune_points)

    def _tile_with_anchors(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        dim = self.problem.dim
        anchors = self.log_prior.anchors
        tiled = np.vstack([np.tile(pts, (dim, 1)), np.tile(anchors, (dim, 1))])
        axes = np.concatenate(
            [
                np.repeat(np.arange(dim), pts.shape[0]),
                np.repeat(np.arange(dim), anchors.shape[0]),
            ]
        )
        return tiled, axes

    # -- fitness ---------------------------------------------------------------

    def _fused_losses(
        self, e: Expr, pts: np.ndarray, fused: tuple[np.ndarray, np.ndarray]
    ) -> tuple[float, float]:
        tiled, axes = fused
        cf = e.eval_coeffs(tiled, axes, self._fused_order)
        dim, n = self.problem.dim, pts.shape[0]
        p = phys_loss_from_coeffs(
            cf[:3, : dim * n].reshape(3, dim, n), self.problem, pts
        )
        t = taylor_loss_from_coeffs(
            cf[: self.log_prior.order + 1, dim * n :], self.log_prior
        )
        return p, t

    def _losses(self, e: Expr) -> tuple[float, float]:
        losses = self._loss_cache.get(e)
        if losses is None:
            if self.log_prior is None:
                losses = (phys_loss(e, self.problem, self.points), 0.0)
            else:
                losses = self._fused_losses(e, self.points, self._fused)
            self._loss_cache[e] = losses
        return losses

    def evaluate(self, e: Expr, birth: int) -> Individual:
        p, t = self._losses(e)
        fit = p + (self.cfg.lam * t if self.prior is not None else 0.0)
        return Individual(e, p, t, fit, birth)

    def _objective(self, e: Expr) -> float:
        """Tuning objective: fitness on a collocation subsample, unmemoized
        (Nelder-Mead floods it with throwaway constant variants)."""
        if self.log_prior is None:
            return phys_loss(e, self.problem, self.tune_points)
        p, t = self._fused_losses(e, self.tune_points, self._fused_tune)
        if self.prior is None:
            return p
        return p + self.cfg.lam * t

    # -- operators ---------------------------------------------------------------

    def _report(self, ind: Individual) -> SensitivityReport:
        if ind.report is None:
            ind.report = sensitivities(
                ind.expr, self.prior, self.problem, self.att_points, self.cfg.beta
            )
        return ind.report

    def _pick_handle(self, ind: Individual) -> ex.Handle:
        handles = ex.subtrees(ind.expr)
        if self.cfg.guided:
            probs = sampling_distribution(self._report(ind), self.cfg.temperature)
            idx = self.rng.choice(len(handles), p=probs)
        else:
            idx = self.rng.integers(len(handles))
        return handles[int(idx)]

    def tournament_select(self, population: list[Individual]) -> Individual:
        idx = self.rng.integers(len(population), size=self.cfg.tournament)
        return min(
            (population[int(i)] for i in idx),
            key=lambda ind: (ind.fitness, ind.complexity),
        )

    def crossover(self, a: Individual, b: Individual) -> tuple[Expr, Expr]:
        for _ in range(5):
            sa = self._pick_handle(a)
            sb = self._pick_handle(b)
            try:
                return swap_subtrees(
                    a.expr, sa, b.expr, sb, self.cfg.max_depth, self.cfg.max_size
                )
            except LimitsExceeded:
                continue
        return a.expr, b.expr

    def mutate(self, ind: Individual) -> Expr:
        for _ in range(5):
            h = self._pick_handle(ind)
            repl = random_expr(self.lib, self.cfg.mutation_depth, self.rng)
            out = ex.replace_subtree(ind.expr, h, repl)
            if out.depth <= self.cfg.max_depth and out.size <= self.cfg.max_size:
                return out
        return ind.expr

    def tune_constants(self, e: Expr, budget: Optional[int] = None) -> Expr:
        """Nelder-Mead over the constant vector; never returns a worse tree."""
        budget = self.cfg.tune_budget if budget is None else budget
        paths = [h for h in ex.subtrees(e) if ex.get_subtree(e, h).kind == "const"]
        if not paths or budget <= 0:
            return e

        def with_consts(values) -> Expr:
            out = e
            for path, v in zip(paths, values):
                out = ex.replace_subtree(out, path, Expr.const(v))
            return out

        x0 = np.array([ex.get_subtree(e, h).value for h in paths])
        base = self._objective(e)
        res = optimize.minimize(
            lambda v: self._objective(with_consts(v)),
            x0,
            method="Nelder-Mead",
            options={"maxfev": budget, "xatol": 1e-10, "fatol": 1e-14},
        )
        if np.isfinite(res.fun) and res.fun < base:
            return with_consts(res.x)
        return e

    def _tune_population(self, population: list[Individual], gen: int) -> None:
        """Full-budget tuning for the leading distinct shapes, cheap stochastic
        tuning for everyone else.

        Tuning only leaders lets one locally-optimized shape monopolize the
        slots while structurally promising trees with raw constants look bad;
        deduplicating by shape and giving the rest of the population a small
        chance reveals their tuned potential.
        """
        cfg = self.cfg
        budgets: dict[int, int] = {}
        seen_shapes: set = set()
        for i, ind in enumerate(population):
            shape = _shape_key(ind.expr)
            if shape in seen_shapes:
                continue
            seen_shapes.add(shape)
            budgets[i] = cfg.tune_budget
            if len(budgets) >= cfg.tune_top:
                break
        for i in range(len(population)):
            if i not in budgets and self.rng.random() < cfg.p_tune_rest:
                budgets[i] = max(cfg.tune_budget // 4, 1)
        for i, budget in budgets.items():
            tuned = self.tune_constants(population[i].expr, budget)
            if tuned is not population[i].expr:
                cand = self.evaluate(tuned, gen)
                if cand.fitness < population[i].fitness:
                    population[i] = cand

    # -- the loop -------------------------------------------------------------------

    def run(self) -> Individual:
        cfg = self.cfg
        population = [
            self.evaluate(random_expr(self.lib, cfg.init_depth, self.rng), 0)
            for _ in range(cfg.population)
        ]
        best = min(population, key=lambda i: i.fitness)
        stale = 0
        flat = 0  # generations without a >1% gain within the current incarnation
        run_best = np.inf  # best fitness since the last restart
        for gen in range(cfg.max_generations):
            population.sort(key=lambda i: (i.fitness, i.complexity))
            if cfg.tune_constants and cfg.tune_top > 0:
                self._tune_population(population, gen)
                population.sort(key=lambda i: (i.fitness, i.complexity))

            gen_best = population[0]
            flat = 0 if gen_best.fitness < 0.99 * run_best else flat + 1
            run_best = min(run_best, gen_best.fitness)
            if gen_best.fitness < best.fitness:
                best = gen_best
                stale = 0
            else:
                stale += 1
            self._log_generation(gen, population, best)
            if best.fitness < FITNESS_EPS or stale > cfg.patience:
                break
            if gen == cfg.max_generations - 1:
                break
            if cfg.restart_after is not None and flat >= cfg.restart_after:
                # the run has settled into a basin: re-draw the gene pool and
                # keep only the best-so-far on the side
                population = [
                    self.evaluate(random_expr(self.lib, cfg.init_depth, self.rng), gen + 1)
                    for _ in range(cfg.population)
                ]
                flat = 0
                run_best = np.inf
                continue

            offspring: list[Individual] = population[: cfg.elitism]
            # a slice of every generation is drawn fresh so tuned local optima
            # cannot fully take over the gene pool
            n_fresh = int(cfg.p_fresh * cfg.population)
            for _ in range(n_fresh):
                offspring.append(
                    self.evaluate(random_expr(self.lib, cfg.init_depth, self.rng), gen + 1)
                )
            while len(offspring) < cfg.population:
                pa = self.tournament_select(population)
                pb = self.tournament_select(population)
                if self.rng.random() < cfg.p_cross:
                    ca, cb = self.crossover(pa, pb)
                else:
                    ca, cb = pa.expr, pb.expr

                def materialize(child: Expr) -> Individual:
                    # unchanged expressions keep the parent's caches
                    if child is pa.expr:
                        return pa
                    if child is pb.expr:
                        return pb
                    return self.evaluate(ex.simplify(child), gen + 1)

                for child in (ca, cb):
                    if len(offspring) >= cfg.population:
                        break
                    ind = materialize(child)
                    if self.rng.random() < cfg.p_mut:
                        mutant = self.mutate(ind)
                        if mutant is not ind.expr:
                            ind = self.evaluate(ex.simplify(mutant), gen + 1)
                    offspring.append(ind)
            population = offspring
        return best

    def _log_generation(self, gen: int, population: list[Individual], best: Individual):
        fits = np.array([i.fitness for i in population])
        self.log.append(
            {
                "gen": gen,
                "best_fitness": best.fitness,
                "mean_fitness": float(np.mean(fits)),
                "best_taylor_loss": best.taylor,
                "best_phys_loss": best.phys,
                "best_complexity": best.complexity,
                "best_expr_text": ex.serialize(best.expr, self.problem.time_axis),
            }
        )


def evolve(
    problem: PdeProblem,
    prior: Optional[TaylorPrior],
    cfg: GpConfig,
    log_prior: Optional[TaylorPrior] = None,
) -> tuple[Individual, list[dict]]:
    """Run one seeded evolution; returns (best individual, per-generation log)."""
    evo = Evolution(problem, prior, cfg, log_prior)
    best = evo.run()
    return best, evo.log
