"""Micro-runs that measure op counts and depths for the cost and depth tables."""

from __future__ import annotations

import numpy as np

from securevfl.approx import KernelSpec
from securevfl.dataset import VerticalSplit
from securevfl.ledger import DepthCheck, Table1Check, min_budget, verify_depth, verify_table1
from securevfl.protocol import (
    Federation,
    PartyId,
    audit_transcript,
    exchange_features,
    exchange_linear_kernel,
    exchange_poly_kernel,
    exchange_rbf_kernel,
)
from securevfl.training import TrainConfig, secure_train_klr, secure_train_lr


def random_split(n: int = 6, d_a: int = 1, d_b: int = 2, seed: int = 0) -> VerticalSplit:
    rng = np.random.default_rng(seed)
    y = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    return VerticalSplit(rng.normal(size=(n, d_a)), rng.normal(size=(n, d_b)), y)


def _entry_check(kernel, protocol: str, d_poly=None) -> Table1Check:
    check = verify_table1(kernel.entry_ledger, protocol, d_poly)
    # every row must cost the same; report the first row that does not
    for led in kernel.row_ledgers:
        if led.counts() != check.measured:
            return Table1Check(check.protocol, check.params, check.expected, led.counts())
    return check


def table1_checks(d_polys=(1, 2, 3, 5), split: VerticalSplit | None = None) -> list[Table1Check]:
    split = split or random_split()
    budget = max(d_polys)
    checks = []

    fed = Federation.create(split, budget)
    checks.append(verify_table1(exchange_features(fed).ledger, "data_exchange"))

    fed = Federation.create(split, budget)
    checks.append(_entry_check(exchange_linear_kernel(fed), "linear_kernel"))

    for dp in d_polys:
        fed = Federation.create(split, budget)
        checks.append(_entry_check(exchange_poly_kernel(fed, 1.0, dp), "poly_kernel", dp))

    fed = Federation.create(split, budget)
    checks.append(_entry_check(exchange_rbf_kernel(fed, 0.5), "rbf_kernel"))
    return checks


def depth_grid(split: VerticalSplit, degrees=(1, 2, 3, 4, 5), d_polys=(1, 2, 3, 5),
               iterations: int = 2, learning_rate: float = 1e-3) -> list[DepthCheck]:
    """Run secure training at exactly the depth-law budget and check each max depth.

    Depth per iteration does not change, so a couple of iterations suffice.
    """
    checks = []
    for deg in degrees:
        cfg = TrainConfig(learning_rate=learning_rate, iterations=iterations, sigmoid_degree=deg)
        r = secure_train_lr(split, cfg, min_budget("lr", deg))
        checks.append(verify_depth(r.max_depth_reached, "lr", deg))
        kernels = [KernelSpec.linear(), *(KernelSpec.polynomial(1.0, dp) for dp in d_polys),
                   KernelSpec.rbf(0.5, taylor=True)]
        for spec in kernels:
            dp = spec.d_poly or 1
            r = secure_train_klr(split, cfg, spec, min_budget("klr", deg, spec.kind, dp))
            checks.append(verify_depth(r.max_depth_reached, "klr", deg, spec.kind, dp))
    return checks


def audit_runs(split: VerticalSplit) -> list:
    """Audit reports for each exchange protocol and one secure training run."""
    party_data = {PartyId.ALICE: split.alice_X, PartyId.BOB: split.bob_X}
    reports = []
    for run in (exchange_features, exchange_linear_kernel,
                lambda f: exchange_poly_kernel(f, 1.0, 3), lambda f: exchange_rbf_kernel(f, 0.5)):
        fed = Federation.create(split, 4)
        reports.append(audit_transcript(run(fed).transcript, party_data))
    r = secure_train_lr(split, TrainConfig(learning_rate=0.1, iterations=2))
    reports.append(audit_transcript(r.transcript, party_data))
    return reports
