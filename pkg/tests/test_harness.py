import numpy as np
import pytest

from rsma_mec import harness
from rsma_mec.ao import SolverFailure
from rsma_mec.harness import (
    CSV_HEADER,
    SweepRow,
    SweepSpec,
    draw_channel,
    fig2_specs,
    fig3_specs,
    fig4_specs,
    first_crossing,
    realization_rng,
    rows_to_csv,
    run_realizations,
    run_sweep,
    summarize,
)

SMALL = SweepSpec("task_size", (6000.0, 8000.0), {"N": 1000, "M2": 6000.0, "snr_db": 15}, n_realizations=6, seed=9)


def test_channel_gains_have_unit_mean():
    rng = np.random.default_rng(0)
    g = np.array([[c.g1, c.g2] for c in (draw_channel(rng) for _ in range(10_000))])
    assert np.all(np.abs(g.mean(axis=0) - 1.0) <= 0.05)
    assert np.all(g >= 0)


def test_channel_draws_are_deterministic():
    a = [draw_channel(realization_rng(42, i)) for i in range(5)]
    b = [draw_channel(realization_rng(42, i)) for i in range(5)]
    assert a == b
    assert a[0] != a[1]
    assert draw_channel(realization_rng(42, 0), 10.0).noise == 1.0


def test_channel_rejects_bad_snr():
    with pytest.raises(ValueError):
        draw_channel(np.random.default_rng(0), float("nan"))


def test_snr_axis_sets_budget():
    spec = SweepSpec("snr", (10.0, 15.0), {"N": 1000}, n_realizations=1)
    assert spec.config_at(10.0).Pt == pytest.approx(10.0)
    assert spec.config_at(10.0).noise == 1.0


def test_axis_mapping():
    assert SweepSpec("blocklength", (250, 500), {"snr_db": 10}).config_at(500).N == 500
    cfg = SweepSpec("task_size", (7000.0,), {"M2": 5500.0}).config_at(7000.0)
    assert (cfg.M1, cfg.M2) == (7000.0, 5500.0)
    tied = SweepSpec("task_size", (7000.0,), tie_tasks=True).config_at(7000.0)
    assert tied.M2 == 7000.0


@pytest.mark.parametrize(
    "kwargs, match",
    [
        ({"axis": "power", "values": (1,)}, "axis"),
        ({"axis": "snr", "values": ()}, "non-empty"),
        ({"axis": "snr", "values": (15, 10)}, "sorted"),
        ({"axis": "snr", "values": (10,), "n_realizations": 0}, "n_realizations"),
        ({"axis": "snr", "values": (10,), "schemes": ("oma",)}, "schemes"),
        ({"axis": "snr", "values": (10,), "fixed": {"bogus": 1}}, "bogus"),
        ({"axis": "snr", "values": (10,), "fixed": {"L": 0.5}}, "L"),
    ],
)
def test_spec_validation(kwargs, match):
    with pytest.raises(ValueError, match=match):
        SweepSpec(**kwargs)


def test_row_range():
    with pytest.raises(ValueError):
        SweepRow(1.0, "rsma", 1.5, 0.0, 0.0, 0)


def test_sweep_rows_and_csv():
    rows = run_sweep(SMALL)
    assert [(r.axis, r.scheme) for r in rows] == [(6000.0, "rsma"), (6000.0, "noma"), (8000.0, "rsma"), (8000.0, "noma")]
    text = rows_to_csv(rows)
    lines = text.splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert len(lines) == 5
    for line in lines[1:]:
        fields = line.split(",")
        assert len(fields) == 6
        for x in (fields[2], fields[3], fields[4]):
            assert len(x.replace(".", "").replace("-", "").split("e")[0].lstrip("0")) <= 6


def test_sweep_is_deterministic_and_job_count_free():
    one = rows_to_csv(run_sweep(SMALL, jobs=1))
    again = rows_to_csv(run_sweep(SMALL, jobs=1))
    two = rows_to_csv(run_sweep(SMALL, jobs=2))
    assert one == again == two


def test_common_random_numbers_keep_rsma_above_noma():
    for per_value in run_realizations(SMALL):
        for rsma, noma in per_value:
            assert rsma.scp >= noma.scp - 1e-9


def test_failures_count_as_zero(monkeypatch):
    def broken(cfg, ch):
        raise SolverFailure(3, np.linalg.LinAlgError("singular"))

    monkeypatch.setattr(harness, "optimize", broken)
    spec = SweepSpec("snr", (15.0,), {"N": 1000}, n_realizations=3, schemes=("rsma",))
    (row,) = run_sweep(spec)
    assert row.mean_scp == 0.0
    assert row.infeasible == 3


def test_summary_statistics():
    res = [[[harness.InstanceResult(s, 2, True)]] for s in (0.0, 1.0, 1.0, 0.0)]
    spec = SweepSpec("snr", (15.0,), schemes=("rsma",), n_realizations=4)
    (row,) = summarize(spec, res)
    assert row.mean_scp == 0.5
    assert row.stderr == pytest.approx(np.std([0, 1, 1, 0], ddof=1) / 2)
    assert row.mean_iters == 2.0


def test_task_size_sweep_trend():
    spec = SweepSpec("task_size", (6000.0, 7000.0, 8000.0, 9000.0), {"N": 1000, "M2": 5500.0}, n_realizations=12, seed=4)
    rows = [r for r in run_sweep(spec) if r.scheme == "rsma"]
    for a, b in zip(rows, rows[1:]):
        assert b.mean_scp <= a.mean_scp + max(a.stderr, b.stderr)


def test_figure_setups():
    f2 = fig2_specs()
    assert sorted({n for n, _ in f2}) == [250, 500, 750, 1000]
    assert sorted({s for _, s in f2}) == [10.0, 15.0]
    spec = f2[(250, 10.0)]
    assert spec.values[0] == 5000.0 and spec.values[-1] == 10000.0 and len(spec.values) == 11
    assert spec.fixed["M2"] == 5500.0 and spec.n_realizations == 100
    f3 = fig3_specs()
    assert sorted(f3) == [6000.0, 7000.0, 8000.0]
    assert all(s.fixed["snr_db"] == 15.0 and s.axis == "blocklength" for s in f3.values())
    f4 = fig4_specs()
    assert sorted(f4) == [500, 1000, 1500, 2000, 3000]
    assert f4[500].values[0] == 5.0 and f4[500].values[-1] == 15.0


def test_blocklength_grid_stays_within_server_capacity():
    from rsma_mec.system import mec_capacity_check, optimal_lambda

    for m, spec in fig3_specs().items():
        top = spec.config_at(spec.values[-1])
        assert mec_capacity_check(top, optimal_lambda(top)), m
    beyond = fig3_specs()[8000.0].config_at(2200)
    assert not mec_capacity_check(beyond, optimal_lambda(beyond))


def test_first_crossing():
    rows = [SweepRow(v, s, m, 0, 0, 0) for v, s, m in [(1, "a", 0.2), (2, "a", 0.6), (3, "a", 0.4), (1, "b", 0.1)]]
    assert first_crossing(rows, "a") == 2
    assert first_crossing(rows, "b") == float("inf")
