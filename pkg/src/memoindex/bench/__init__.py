"""Workload generation, targets, runner and experiments."""
from .baseline import OrderedMap
from .datasets import load_dataset, write_dataset
from .runner import RunReport, build_target, read_report_csv, report_csv, run
from .workload import Op, WorkloadSpec, generate_stream, make_corpus, synthetic_keys
