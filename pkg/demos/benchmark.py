"""A small benchmark and ablation, written as CSV to stdout.

The same generated instances are shared by every variant, so the ablation
rows are directly comparable.  Sizes and budgets are kept small here; the
CLI ``bench`` and ``ablate`` subcommands run the full-size versions.
"""
import sys

from l2gls import BenchmarkSpec, SearchConfig, emit_ablation, emit_report, run_ablation, run_benchmark

cfg = SearchConfig(max_steps=2000)

report = run_benchmark(BenchmarkSpec("TSP", (10, 20), 10, cfg, seed=0))
sys.stdout.write(emit_report(report).decode())
print(f"# {len(report.records)} instances in {report.elapsed:.1f}s, gaps are to the Held-Karp optimum\n")

table = run_ablation((20, 30), 5, cfg)
sys.stdout.write(emit_ablation(table).decode())
