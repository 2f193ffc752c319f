"""Loss wiring, optimizer loop, rollouts, and error metrics."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rbfmgn.assembly import rollout_direct
from rbfmgn.errors import ConfigurationError, DivergenceError
from rbfmgn.geometry import DomainSpec, build_graph, sample_nodes, triangulate
from rbfmgn.gnn import AdamState, build_model
from rbfmgn.problems import (
    ProblemSpec,
    amoeba_heat_problem,
    butterfly_heat_problem,
    lshape_wave_problem,
    square_source_problem,
)
from rbfmgn.stencils import RbfKernel, build_stencil_set
from rbfmgn.training import (
    TrainConfig,
    assemble_all,
    batch_levels,
    first_trainable_level,
    max_abs_error,
    pde_loss,
    relative_l2,
    rollout_model,
    rollout_model_reversed,
    teacher_trajectory,
    train,
    trainable_levels,
)


def setup_case(problem, n_interior=60, n_boundary=24, m=10, seed=0, kernel="ph3"):
    nodes = sample_nodes(problem.domain, n_interior, n_boundary, seed=seed)
    graph = build_graph(nodes, triangulate(nodes, problem.domain))
    stencils = build_stencil_set(
        nodes.coords,
        RbfKernel(kernel, 1.0),
        m=m,
        poly_order=2,
        centers=np.arange(nodes.n_interior),
    )
    return nodes, graph, stencils


def constant_problem(value=2.0, tau=0.05, t_final=0.5):
    """heat_plain whose exact solution is the constant ``value``."""
    return ProblemSpec(
        kind="heat_plain",
        coefficient=1.0,
        domain=DomainSpec("unit_square"),
        tau=tau,
        t_final=t_final,
        analytic=lambda x, y, t: np.full_like(np.asarray(x, dtype=float), value),
        name="constant",
    )


class TestOracleInjection:
    @pytest.mark.parametrize(
        "problem,m",
        [
            (square_source_problem(tau=0.01, t_final=0.1), 10),
            (amoeba_heat_problem(lam=1.0, tau=0.01, t_final=0.1), 15),
            (butterfly_heat_problem(tau=0.01, t_final=0.1), 15),
        ],
        ids=["square-source", "amoeba-heat", "butterfly-heat"],
    )
    def test_direct_step_zeroes_heat_loss_on_every_level(self, problem, m):
        # Inject the one-step oracle update of each teacher snapshot: that
        # value zeroes the level's residual by construction.
        from rbfmgn.assembly import direct_step

        nodes, graph, stencils = setup_case(problem, m=m)
        traj = teacher_trajectory(problem, nodes, stencil_set=stencils)
        n_pairs = trainable_levels(traj)
        systems = assemble_all(nodes, stencils, problem, n_pairs)
        coords_bnd = nodes.coords[nodes.n_interior:]
        for level in range(n_pairs):
            stepped = direct_step(
                systems[level], traj.values[level], problem, coords_bnd
            )
            inject = {level: stepped[: nodes.n_interior]}
            loss = pde_loss(None, graph, systems, traj, [level], inject=inject)
            assert float(loss.value) <= 1e-10

    def test_direct_step_zeroes_wave_loss_on_every_assembled_level(self):
        from rbfmgn.assembly import wave_direct_step

        problem = lshape_wave_problem(tau=0.1, t_final=1.0)
        nodes, graph, stencils = setup_case(problem, m=25)
        traj = rollout_direct(problem, nodes, stencils)
        n_pairs = trainable_levels(traj)
        systems = assemble_all(nodes, stencils, problem, n_pairs)
        assert first_trainable_level(problem) == 1
        for level in range(1, n_pairs):
            stepped = wave_direct_step(
                systems[level], traj.values[level - 1], traj.values[level]
            )
            inject = {level: stepped[: nodes.n_interior]}
            loss = pde_loss(None, graph, systems, traj, [level], inject=inject)
            assert float(loss.value) <= 1e-10

    def test_reversed_injection_exact_for_stepped_pairs(self):
        # Reversed mode scores a candidate earlier state against level l+1;
        # the exact zero is the state whose forward step gives level l+1.
        from rbfmgn.assembly import direct_step

        problem = square_source_problem(tau=0.1, t_final=0.5)
        nodes, graph, stencils = setup_case(problem)
        teacher = teacher_trajectory(problem, nodes)
        n_pairs = trainable_levels(teacher)
        systems = assemble_all(nodes, stencils, problem, n_pairs)
        coords_bnd = nodes.coords[nodes.n_interior:]
        from rbfmgn.assembly import Trajectory

        for level in range(n_pairs):
            values = teacher.values.copy()
            values[level + 1] = direct_step(
                systems[level], teacher.values[level], problem, coords_bnd
            )
            paired = Trajectory(
                values=values, times=teacher.times, provenance="analytic"
            )
            inject = {level: teacher.values[level][: nodes.n_interior]}
            loss = pde_loss(
                None, graph, systems, paired, [level], time_reversed=True,
                inject=inject,
            )
            assert float(loss.value) <= 1e-10

    def test_zero_model_zero_field_zero_data_gives_zero_loss(self):
        problem = constant_problem(value=0.0)
        nodes, graph, stencils = setup_case(problem)
        traj = teacher_trajectory(problem, nodes)
        systems = assemble_all(nodes, stencils, problem, 2)
        model = build_model(node_in=3, latent_dim=4, blocks=1, hidden=4, seed=0)
        model.zero_()
        loss = pde_loss(model, graph, systems, traj, [0, 1])
        assert float(loss.value) == 0.0

    def test_untrained_model_loss_positive_finite(self):
        problem = square_source_problem(tau=0.1, t_final=0.5)
        nodes, graph, stencils = setup_case(problem)
        traj = teacher_trajectory(problem, nodes)
        systems = assemble_all(nodes, stencils, problem, 2)
        model = build_model(node_in=3, latent_dim=8, blocks=2, hidden=8, seed=1)
        loss = float(pde_loss(model, graph, systems, traj, [0, 1]).value)
        assert np.isfinite(loss) and loss > 0

    def test_injection_shape_is_validated(self):
        problem = constant_problem()
        nodes, graph, stencils = setup_case(problem)
        traj = teacher_trajectory(problem, nodes)
        systems = assemble_all(nodes, stencils, problem, 1)
        with pytest.raises(ValueError, match="interior"):
            pde_loss(
                None, graph, systems, traj, [0],
                inject={0: np.zeros(nodes.n_interior + 1)},
            )

    def test_empty_level_list_rejected(self):
        problem = constant_problem()
        nodes, graph, stencils = setup_case(problem)
        traj = teacher_trajectory(problem, nodes)
        systems = assemble_all(nodes, stencils, problem, 1)
        with pytest.raises(ValueError):
            pde_loss(None, graph, systems, traj, [])


class TestBatching:
    def test_all_levels_when_horizon_is_small(self):
        assert batch_levels(0, 3, 5) == [0, 1, 2]
        assert batch_levels(7, 3, 5) == [0, 1, 2]

    def test_windows_cycle_deterministically(self):
        seen = [tuple(batch_levels(it, 10, 5)) for it in range(8)]
        assert seen == [tuple(batch_levels(it, 10, 5)) for it in range(8)]
        assert all(len(b) == 5 for b in seen)
        assert all(b[-1] <= 9 for b in seen)
        assert len(set(seen)) > 1  # actually moves through the horizon

    @given(
        st.integers(0, 1000), st.integers(1, 200), st.integers(1, 20)
    )
    @settings(max_examples=100, deadline=None)
    def test_batches_are_consecutive_and_in_range(self, it, n_pairs, batch):
        levels = batch_levels(it, n_pairs, batch)
        assert levels, "never empty"
        assert levels == list(range(levels[0], levels[0] + len(levels)))
        assert levels[0] >= 0 and levels[-1] < n_pairs
        assert len(levels) == min(batch, n_pairs)


class TestTrainLoop:
    def make(self, iterations=5, **kw):
        problem = square_source_problem(tau=0.1, t_final=0.5)
        nodes, graph, stencils = setup_case(problem, n_interior=40, n_boundary=20)
        traj = teacher_trajectory(problem, nodes)
        model = build_model(node_in=3, latent_dim=6, blocks=2, hidden=8, seed=3)
        cfg = TrainConfig(iterations=iterations, batch_size=3, **kw)
        return model, graph, nodes, stencils, problem, traj, cfg

    def test_zero_iterations_returns_model_unchanged(self):
        model, graph, nodes, stencils, problem, traj, _ = self.make()
        before = [p.value.copy() for p in model.parameters()]
        res = train(model, graph, nodes, stencils, problem, traj,
                    TrainConfig(iterations=0))
        assert res.history == []
        for p, b in zip(model.parameters(), before):
            np.testing.assert_array_equal(p.value, b)

    def test_history_length_and_decrease(self):
        model, graph, nodes, stencils, problem, traj, cfg = self.make(iterations=25)
        res = train(model, graph, nodes, stencils, problem, traj, cfg)
        assert len(res.history) == 25
        assert all(np.isfinite(v) for v in res.history)
        assert res.history[-1] < res.history[0]
        assert res.state.t == 25

    def test_deterministic_given_seeded_model(self):
        out = []
        for _ in range(2):
            model, graph, nodes, stencils, problem, traj, cfg = self.make()
            res = train(model, graph, nodes, stencils, problem, traj, cfg)
            out.append((res.history, [p.value.copy() for p in model.parameters()]))
        assert out[0][0] == out[1][0]
        for a, b in zip(out[0][1], out[1][1]):
            np.testing.assert_array_equal(a, b)

    def test_divergence_aborts_with_partial_history(self):
        model, graph, nodes, stencils, problem, traj, _ = self.make()
        cfg = TrainConfig(iterations=50, batch_size=3, learning_rate=1e6)
        with pytest.raises(DivergenceError) as err:
            train(model, graph, nodes, stencils, problem, traj, cfg)
        history = getattr(err.value, "history")
        assert 0 < len(history) <= 50

    def test_trajectory_too_short_rejected(self):
        model, graph, nodes, stencils, problem, _, cfg = self.make()
        from rbfmgn.assembly import Trajectory

        stub = Trajectory(
            values=np.zeros((1, graph.n)), times=np.zeros(1), provenance="analytic"
        )
        with pytest.raises(ConfigurationError, match="level pair"):
            train(model, graph, nodes, stencils, problem, stub, cfg)

    def test_resume_continues_from_state(self):
        model, graph, nodes, stencils, problem, traj, _ = self.make()
        cfg_a = TrainConfig(iterations=4, batch_size=3)
        res_a = train(model, graph, nodes, stencils, problem, traj, cfg_a)
        res_b = train(model, graph, nodes, stencils, problem, traj,
                      TrainConfig(iterations=3, batch_size=3), state=res_a.state)
        assert res_a.state is res_b.state
        assert res_b.state.t == 7

    def test_wave_training_starts_at_level_one(self):
        problem = lshape_wave_problem(tau=0.1, t_final=0.5)
        nodes, graph, stencils = setup_case(problem, m=25)
        traj = teacher_trajectory(problem, nodes, stencil_set=stencils)
        model = build_model(node_in=4, latent_dim=4, blocks=1, hidden=6, seed=0)
        res = train(model, graph, nodes, stencils, problem, traj,
                    TrainConfig(iterations=3, batch_size=2))
        assert len(res.history) == 3
        assert all(np.isfinite(v) for v in res.history)

    def test_time_reversed_training_decreases_loss(self):
        problem = square_source_problem(tau=0.1, t_final=0.5)
        nodes, graph, stencils = setup_case(problem, n_interior=40, n_boundary=20)
        traj = teacher_trajectory(problem, nodes)
        model = build_model(node_in=3, latent_dim=6, blocks=2, hidden=8, seed=3)
        res = train(model, graph, nodes, stencils, problem, traj,
                    TrainConfig(iterations=20, batch_size=3, time_reversed=True))
        assert res.history[-1] < res.history[0]

    def test_config_validation(self):
        with pytest.raises(ConfigurationError):
            TrainConfig(iterations=-1)
        with pytest.raises(ConfigurationError):
            TrainConfig(batch_size=0)
        with pytest.raises(ConfigurationError):
            TrainConfig(learning_rate=0.0)


class TestRollout:
    def test_zero_model_on_constant_problem_reproduces_truth(self):
        problem = constant_problem(value=2.0)
        nodes, graph, stencils = setup_case(problem)
        model = build_model(node_in=3, latent_dim=4, blocks=1, hidden=4, seed=0)
        model.zero_()
        traj = rollout_model(model, graph, nodes, problem, 5)
        assert traj.values.shape == (6, graph.n)
        np.testing.assert_allclose(traj.values, 2.0)
        assert traj.provenance == "predicted"

    def test_boundary_rows_follow_dirichlet_data(self):
        problem = square_source_problem(tau=0.1, t_final=0.5)
        nodes, graph, stencils = setup_case(problem)
        model = build_model(node_in=3, latent_dim=4, blocks=1, hidden=4, seed=2)
        traj = rollout_model(model, graph, nodes, problem, 3)
        from rbfmgn.problems import boundary_values

        for level in (1, 2, 3):
            want = boundary_values(
                problem, graph.coords[graph.n_interior:], level * problem.tau
            )
            np.testing.assert_allclose(
                traj.values[level][graph.n_interior:], want, atol=1e-14
            )

    def test_wave_boundary_copies_mirror(self):
        problem = lshape_wave_problem(tau=0.1, t_final=0.5)
        nodes, graph, stencils = setup_case(problem, m=25)
        model = build_model(node_in=4, latent_dim=4, blocks=1, hidden=4, seed=2)
        traj = rollout_model(model, graph, nodes, problem, 3)
        from rbfmgn.assembly import nearest_interior

        mirror = nearest_interior(nodes)
        for level in (1, 2, 3):
            np.testing.assert_array_equal(
                traj.values[level][graph.n_interior:],
                traj.values[level][mirror],
            )

    def test_rollout_is_deterministic(self):
        problem = square_source_problem(tau=0.1, t_final=0.5)
        nodes, graph, stencils = setup_case(problem)
        model = build_model(node_in=3, latent_dim=5, blocks=2, hidden=6, seed=4)
        a = rollout_model(model, graph, nodes, problem, 4)
        b = rollout_model(model, graph, nodes, problem, 4)
        np.testing.assert_array_equal(a.values, b.values)

    def test_custom_start_overrides_initial_condition(self):
        problem = constant_problem(value=1.0)
        nodes, graph, stencils = setup_case(problem)
        model = build_model(node_in=3, latent_dim=4, blocks=1, hidden=4, seed=0)
        model.zero_()
        start = np.full(graph.n, 9.0)
        traj = rollout_model(model, graph, nodes, problem, 2, start=start)
        np.testing.assert_array_equal(traj.values[0], start)
        # zero model keeps interior at 9; boundary resets to the Dirichlet 1
        np.testing.assert_allclose(traj.values[1][: graph.n_interior], 9.0)
        np.testing.assert_allclose(traj.values[1][graph.n_interior:], 1.0)

    def test_reversed_rollout_walks_back_to_level_zero(self):
        problem = square_source_problem(tau=0.1, t_final=0.5)
        nodes, graph, stencils = setup_case(problem)
        traj = teacher_trajectory(problem, nodes)
        model = build_model(node_in=3, latent_dim=4, blocks=1, hidden=4, seed=1)
        model.zero_()
        out = rollout_model_reversed(
            model, graph, problem, 5, start=traj.values[5]
        )
        assert out.values.shape == (6, graph.n)
        np.testing.assert_array_equal(out.values[5], traj.values[5])
        np.testing.assert_allclose(out.times, traj.times)
        # zero model: interior frozen at final values, boundaries re-imposed
        np.testing.assert_allclose(
            out.values[0][: graph.n_interior],
            traj.values[5][: graph.n_interior],
        )

    def test_reversed_rollout_rejects_wave(self):
        problem = lshape_wave_problem()
        nodes, graph, stencils = setup_case(problem, m=25)
        model = build_model(node_in=4, latent_dim=4, blocks=1, hidden=4, seed=1)
        with pytest.raises(ConfigurationError):
            rollout_model_reversed(model, graph, problem, 3, np.zeros(graph.n))


class TestMetrics:
    def test_hand_values(self):
        assert relative_l2(np.array([1.0, 1.0]), np.array([1.0, 0.0])) == 1.0
        assert relative_l2(2 * np.ones(4), np.ones(4)) == 1.0
        assert max_abs_error(np.array([1.0, -3.0]), np.array([0.5, 1.0])) == 4.0

    def test_zero_reference_raises_with_absolute_norm(self):
        with pytest.raises(ValueError) as err:
            relative_l2(np.array([3.0, 4.0]), np.zeros(2))
        assert "5" in str(err.value)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            relative_l2(np.zeros(3), np.zeros(4))
        with pytest.raises(ValueError):
            max_abs_error(np.zeros(3), np.zeros(4))

    @given(
        st.floats(0.1, 100.0),
        st.integers(0, 2**32 - 1),
    )
    @settings(max_examples=50, deadline=None)
    def test_relative_l2_scale_invariance(self, alpha, seed):
        rng = np.random.default_rng(seed)
        p, t = rng.normal(size=6), rng.normal(size=6) + 3.0
        assert relative_l2(alpha * p, alpha * t) == pytest.approx(
            relative_l2(p, t), rel=1e-12
        )

    @given(
        st.floats(-50.0, 50.0),
        st.integers(0, 2**32 - 1),
    )
    @settings(max_examples=50, deadline=None)
    def test_max_abs_translation_invariance(self, c, seed):
        rng = np.random.default_rng(seed)
        p, t = rng.normal(size=6), rng.normal(size=6)
        assert max_abs_error(p + c, t + c) == pytest.approx(
            max_abs_error(p, t), abs=1e-9
        )


class TestTeacherTrajectory:
    def test_analytic_problems_use_the_exact_solution(self):
        problem = square_source_problem(tau=0.1, t_final=0.3)
        nodes, _, _ = setup_case(problem)
        traj = teacher_trajectory(problem, nodes)
        assert traj.provenance == "analytic"
        from rbfmgn.problems import analytic_solution

        for level, t in enumerate(traj.times):
            np.testing.assert_array_equal(
                traj.values[level], analytic_solution(problem, nodes.coords, float(t))
            )

    def test_wave_without_stencils_is_an_error(self):
        problem = lshape_wave_problem()
        nodes, _, _ = setup_case(problem, m=25)
        with pytest.raises(ConfigurationError, match="stencil"):
            teacher_trajectory(problem, nodes)

    def test_wave_uses_direct_stepper(self):
        problem = lshape_wave_problem(tau=0.1, t_final=0.5)
        nodes, _, stencils = setup_case(problem, m=25)
        traj = teacher_trajectory(problem, nodes, stencil_set=stencils)
        assert traj.provenance == "direct"
        assert traj.values.shape[0] == 6
