from soundsight.bench.harness import (
    AXES,
    BenchRow,
    bench,
    bench_cells,
    generate_eval_set,
    report_tsv,
    rows_fingerprint,
)

__all__ = [
    "AXES",
    "BenchRow",
    "bench",
    "bench_cells",
    "generate_eval_set",
    "report_tsv",
    "rows_fingerprint",
]
