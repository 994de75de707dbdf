"""Cup-curriculum training: iterative magnitude pruning followed by LIFO
weight reintroduction, with baselines and rank-sum comparison statistics.

The heavy lifting lives in the compiled ``cupcur._core`` extension; this
package turns its JSON-string returns into dicts.
"""

import json as _json

from . import _core

__all__ = [
    "ExperimentRunner",
    "default_spec",
    "wmw_test",
    "relative_performance",
    "perplexity",
    "update_scale",
    "build_report",
    "emit_plot_data",
]


def _loads(s):
    return _json.loads(s)


def default_spec():
    """The fully resolved default experiment spec as a dict."""
    return _loads(_core.default_spec_json())


class ExperimentRunner:
    """Runs cup-curriculum and baseline trainings into spec['out_dir'].

    ``spec`` may be a dict (see :func:`default_spec` for the schema) or a
    path-free JSON string.
    """

    def __init__(self, spec):
        if isinstance(spec, dict):
            spec = _json.dumps(spec)
        self._runner = _core.ExperimentRunner(spec)

    @property
    def vocab_size(self):
        return self._runner.vocab_size

    @property
    def resolved_spec(self):
        return _loads(self._runner.resolved_spec_json)

    def run_cup(self, seed, strategy="best:random:identical"):
        return _loads(self._runner.run_cup(seed, strategy))

    def run_early_stopping_baseline(self):
        return _loads(self._runner.run_early_stopping_baseline())

    def run_imp_baseline(self):
        return _loads(self._runner.run_imp_baseline())

    def run_strategy_grid(self, strategies, parallel=1):
        return _loads(self._runner.run_strategy_grid(list(strategies), parallel))


def wmw_test(xs, ys, alternative="two-sided", alpha=0.01):
    """Wilcoxon-Mann-Whitney rank-sum test; exact for small samples."""
    return _loads(_core.wmw_test(list(xs), list(ys), alternative, alpha))


def relative_performance(candidate_loss, baseline_loss):
    return _core.relative_performance(candidate_loss, baseline_loss)


def perplexity(loss):
    return _core.perplexity(loss)


def update_scale(age, current_step, scheme, f=0.5):
    return _core.update_scale(age, current_step, scheme, f)


def build_report(out_dir, alpha=0.01):
    return _loads(_core.build_report(out_dir, alpha))


def emit_plot_data(out_dir, csv_path):
    _core.emit_plot_data(out_dir, csv_path)
