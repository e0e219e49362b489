import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from maxwell_phjd import study
from maxwell_phjd.errors import ConfigurationError, MissingRequired, StudyRowError, UnknownKey

EX1_TEXT = ("domain = rect2d\nlengths = 6.283185307179586 3.141592653589793\ncoarse_resolution = 8 4\n"
            "refinement_range = 2 4\noverlap_ratio = 0.25")


def test_parse_example_config():
    cfg = study.parse_config(EX1_TEXT)
    assert cfg.domain == "rect2d"
    assert cfg.lengths == (6.283185307179586, 3.141592653589793)
    assert cfg.coarse_resolution == (8, 4)
    assert cfg.refinement_range == (2, 4)
    assert cfg.overlap_ratio == 0.25
    assert cfg.reference() == pytest.approx(0.25, rel=1e-15)


def test_parse_errors():
    with pytest.raises(MissingRequired):
        study.parse_config("")
    with pytest.raises(TypeError) as info:
        study.parse_config(EX1_TEXT + "\noverlap_ratio = banana")
    assert "overlap_ratio" in str(info.value)
    with pytest.raises(UnknownKey) as info:
        study.parse_config(EX1_TEXT + "\nsmoother = jacobi")
    assert "smoother" in str(info.value)
    with pytest.raises(ConfigurationError):
        study.parse_config("domain = rect2d\ncoarse_resolution = 8 4\nrefinement_range = 3 2")
    with pytest.raises(ConfigurationError):
        study.parse_config("domain rect2d")


def test_parse_forms_and_overrides():
    cfg = study.parse_config("# comment\ndomain = square2d  # trailing\ncoarse_resolution = 2x2\n"
                             "refinement_range = 3\ntol_resnorm = none\nscalability_n_list = 2x2, 4x4\n"
                             "coarse_resolution = 4")
    assert cfg.coarse_resolution == (4,)
    assert cfg.refinement_range == (3, 3)
    assert cfg.tol_resnorm is None
    assert cfg.scalability_n_list == ((2, 2), (4, 4))


@pytest.mark.parametrize("kind,value", [("rect2d", 0.25), ("square2d", 1.0), ("lshape2d", 1.47562182),
                                        ("box3d", 17 / 18), ("cube3d", 2.0)])
def test_reference_defaults(kind, value):
    cfg = study.StudyConfig(domain=kind, coarse_resolution=(2,))
    assert cfg.reference() == pytest.approx(value, rel=1e-14)


def test_reference_material_scaling():
    cfg = study.StudyConfig(domain="rect2d", coarse_resolution=(2, 1), eps_r=2.0, mu_r=2.0)
    assert cfg.reference() == pytest.approx(0.0625)
    assert study.StudyConfig(domain="rect2d", coarse_resolution=(2, 1), reference_lambda=0.3).reference() == 0.3


def test_single_row_study_has_blank_order():
    cfg = study.StudyConfig(domain="rect2d", coarse_resolution=(2, 1), refinement_range=(2, 2))
    report = study.run_convergence_study(cfg)
    assert len(report.rows) == 1 and report.rows[0].con_ord is None
    text = study.emit(report)
    assert text.splitlines()[-1].endswith(",")
    (row,) = study.parse_csv(text)
    assert row["con_ord"] is None and row["dof"] == report.rows[0].dof


def test_two_row_study_orders():
    cfg = study.StudyConfig(domain="rect2d", coarse_resolution=(2, 1), refinement_range=(2, 3))
    report = study.run_convergence_study(cfg)
    assert [r.dof for r in report.rows] == [84, 360]
    assert report.rows[0].h > report.rows[1].h
    e = [abs(r.lam - 0.25) for r in report.rows]
    assert report.rows[1].con_ord == pytest.approx(math.log2(e[0] / e[1]), rel=1e-12)


def test_single_entry_scale_study():
    cfg = study.StudyConfig(domain="square2d", coarse_resolution=(2, 2), refinement_range=(2, 3),
                            scalability_n_list=((2, 2),), overlap_ratio=0.125)
    report = study.run_scalability_study(cfg)
    assert len(report.rows) == 1
    assert report.rows[0].n == 8 and report.rows[0].dof == 736
    assert study.emit(report).splitlines()[len(report.metadata)].startswith("n,h,dof")


def test_scale_levels_rejects_mismatch():
    cfg = study.StudyConfig(domain="square2d", coarse_resolution=(2, 2), refinement_range=(2, 3),
                            scalability_n_list=((2, 2), (4, 4), (3, 3)))
    with pytest.raises(ConfigurationError):
        study.scalability_levels(cfg)
    cfg = study.StudyConfig(domain="square2d", coarse_resolution=(2, 2), refinement_range=(2, 3),
                            scalability_n_list=((2, 2), (8, 8)))
    assert study.scalability_levels(cfg) == [((2, 2), 3), ((8, 8), 1)]
    with pytest.raises(ConfigurationError):
        study.scalability_levels(study.StudyConfig(domain="square2d", coarse_resolution=(2, 2)))


def test_empty_report_is_header_only():
    assert study.emit(study.StudyReport()) == "h,dof,it,dlambda,resnorm,lambda,con_ord\n"
    assert study.parse_csv(study.emit(study.StudyReport())) == []
    with pytest.raises(ValueError):
        study.emit(study.StudyReport(), "json")


def test_lambda_round_trip_at_15_digits():
    row = study.StudyRow(h=2.221441469079183, dof=1488, it=7, dlambda=3.2e-9, resnorm=1.234567e-5,
                         lam=0.249933057840449)
    (back,) = study.parse_csv(study.emit(study.StudyReport(rows=(row,))))
    assert back["lambda"] == 0.249933057840449
    assert back["dlambda"] == 3.2e-9 and back["resnorm"] == 1.235e-5


@given(st.lists(st.tuples(st.floats(1e-3, 10), st.integers(1, 10**6), st.integers(0, 50),
                          st.floats(1e-16, 1.0), st.floats(1e-16, 1.0), st.floats(1e-3, 100),
                          st.floats(-5, 5)), min_size=1, max_size=5))
def test_csv_round_trip_is_exact(rows):
    raw = tuple(study.StudyRow(h=h, dof=d, it=i, dlambda=dl, resnorm=rn, lam=lam, con_ord=o)
                for h, d, i, dl, rn, lam, o in rows)
    report = study.StudyReport(rows=raw, metadata=(("study", "conv"),))
    text = study.emit(report)
    parsed = study.parse_csv(text)
    # the emitted text is the canonical form: reparse and re-emit reproduces it
    again = tuple(study.StudyRow(h=p["h"], dof=p["dof"], it=p["it"], dlambda=p["dlambda"], resnorm=p["resnorm"],
                                 lam=p["lambda"], con_ord=p["con_ord"]) for p in parsed)
    assert study.emit(study.StudyReport(rows=again, metadata=report.metadata)) == text
    for p, r in zip(parsed, raw):
        assert (p["dof"], p["it"]) == (r.dof, r.it)
        assert p["lambda"] == float(f"{r.lam:.15g}")


def test_table_format_aligned():
    row = study.StudyRow(h=1.5, dof=84, it=6, dlambda=1e-9, resnorm=2e-6, lam=0.25)
    lines = study.emit(study.StudyReport(rows=(row, row)), "table").splitlines()
    assert len({len(ln) for ln in lines}) == 1
    assert lines[0].split() == list(study.CSV_COLUMNS)


def test_provenance_header_and_thread_independence():
    cfg = study.StudyConfig(domain="rect2d", coarse_resolution=(2, 1), refinement_range=(2, 3))
    a = study.emit(study.run_convergence_study(cfg))
    b = study.emit(study.run_convergence_study(study.StudyConfig(**{**cfg.__dict__, "threads": 4})))
    assert a == b
    header = [ln for ln in a.splitlines() if ln.startswith("# ")]
    for key in ("domain", "coarse_resolution", "refinement_range", "overlap_ratio", "reference_lambda_used"):
        assert any(ln.startswith(f"# {key} = ") for ln in header)


def test_row_errors_are_annotated(monkeypatch):
    from maxwell_phjd.errors import NoConvergence

    def boom(*args):
        raise NoConvergence("cg stalled")

    monkeypatch.setattr(study, "solve_level", boom)
    cfg = study.StudyConfig(domain="rect2d", coarse_resolution=(2, 1), refinement_range=(2, 3))
    with pytest.raises(StudyRowError) as info:
        study.run_convergence_study(cfg)
    assert "r=2" in str(info.value)
    assert isinstance(info.value.__cause__, NoConvergence)


def test_nonconverged_row_is_flagged():
    cfg = study.StudyConfig(domain="rect2d", coarse_resolution=(2, 1), refinement_range=(2, 2), max_iterations=2)
    report = study.run_convergence_study(cfg)
    assert not report.converged
    assert "# not converged: dof=84" in study.emit(report)
