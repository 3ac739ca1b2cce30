import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import flat_profile, make_config
from qdsom.errors import ConfigurationError, ContractViolation, IngestionError
from qdsom.grid_env import (
    ACTION_FIELDS, OBS_DIM, BuildingProfile, EnvConfig, EnvState, SmartGridEnv, bundled_profiles, env_step,
    init_env, initial_snapshot, load_config, load_profile, load_profiles, observe, observe_all,
    scale_action, scale_actions,
)
from qdsom.harness import check_snapshot


def write_profile(path, needs, header="hour_index,need_wh"):
    lines = [header] + [f"{i},{v}" for i, v in enumerate(needs)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def joint(config, **cols):
    act = np.zeros((config.n_agents, 6))
    for name, values in cols.items():
        act[:, ACTION_FIELDS.index(name)] = values
    return act


class TestProfiles:
    def test_derived_fields(self, tmp_path):
        needs = [1000.0] * 23 + [5000.0]
        p = load_profile(write_profile(tmp_path / "household.csv", needs))
        assert p.name == "Household"
        assert p.action_range == pytest.approx(5500.0)
        assert p.battery_capacity == pytest.approx(15000.0)
        assert p.solar_production == pytest.approx(0.2 * np.mean(needs))

    def test_overrides(self, tmp_path):
        p = load_profile(write_profile(tmp_path / "x.csv", [100.0] * 24), battery_capacity=42.0)
        assert p.battery_capacity == 42.0

    def test_wrong_row_count(self, tmp_path):
        path = write_profile(tmp_path / "short.csv", [100.0] * 23)
        with pytest.raises(IngestionError, match="short.csv"):
            load_profile(path, "daily")

    def test_zero_need_names_row(self, tmp_path):
        needs = [100.0] * 24
        needs[5] = 0.0
        with pytest.raises(IngestionError, match="row 7"):
            load_profile(write_profile(tmp_path / "z.csv", needs))

    def test_missing_column(self, tmp_path):
        with pytest.raises(IngestionError, match="need_wh"):
            load_profile(write_profile(tmp_path / "m.csv", [1.0] * 24, header="hour_index,need"))

    def test_out_of_order_hours(self, tmp_path):
        path = tmp_path / "o.csv"
        path.write_text("hour_index,need_wh\n1,5\n0,5\n", encoding="utf-8")
        with pytest.raises(IngestionError):
            load_profile(path)

    def test_unparsable(self, tmp_path):
        path = tmp_path / "u.csv"
        path.write_text("hour_index,need_wh\n0,abc\n", encoding="utf-8")
        with pytest.raises(IngestionError):
            load_profile(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(IngestionError):
            load_profile(tmp_path / "nope.csv")

    def test_load_many(self, tmp_path):
        a = write_profile(tmp_path / "office.csv", [300.0] * 24)
        b = write_profile(tmp_path / "school.csv", [900.0] * 24)
        out = load_profiles([a, b], overrides={"School": {"solar_production": 0.0}})
        assert [p.name for p in out] == ["Office", "School"]
        assert out[1].solar_production == 0.0

    @pytest.mark.parametrize("mode,hours", [("daily", 24), ("annual", 8760)])
    def test_bundled(self, mode, hours):
        profiles = bundled_profiles(mode)
        assert set(profiles) == {"Household", "Office", "School"}
        for p in profiles.values():
            assert p.needs.shape == (hours,) and p.needs.min() > 0
            assert p.action_range >= p.needs.max()


class TestConfig:
    def test_zero_agents(self):
        with pytest.raises(ConfigurationError):
            EnvConfig(roster=[(flat_profile(), 0)])

    def test_profile_length_must_match_mode(self):
        with pytest.raises(ConfigurationError):
            EnvConfig(roster=[(flat_profile(), 1)], mode="annual")

    @pytest.mark.parametrize("kw", [{"scarcity_factor": 0.0}, {"scarcity_factor": 2.0}, {"buy_price": -1.0}])
    def test_bad_constants(self, kw):
        with pytest.raises(ConfigurationError):
            make_config(**kw)

    def test_json_config(self, tmp_path):
        write_profile(tmp_path / "custom.csv", [400.0] * 24)
        doc = {
            "mode": "daily",
            "scarcity_factor": 0.5,
            "roster": [
                {"profile": "Household", "count": 2},
                {"profile": "Custom", "count": 1, "file": "custom.csv", "battery_capacity": 99.0},
            ],
        }
        (tmp_path / "env.json").write_text(json.dumps(doc), encoding="utf-8")
        cfg = load_config(tmp_path / "env.json")
        assert cfg.n_agents == 3 and cfg.scarcity_factor == 0.5
        assert cfg.agent_profiles == ("Household", "Household", "Custom")
        assert cfg.battery_capacity[2] == 99.0

    def test_json_unknown_key(self, tmp_path):
        (tmp_path / "env.json").write_text(json.dumps({"roster": [{"profile": "Office"}], "colour": 1}))
        with pytest.raises(ConfigurationError):
            load_config(tmp_path / "env.json")


class TestScaleAction:
    def test_paper_example(self):
        assert scale_action([0.5] * 6, 6000.0).consume_grid == 3000.0

    def test_zero_and_full(self):
        assert scale_action([0.0] * 6, 5500.0).sell == 0.0
        assert scale_action([1.0] * 6, 5500.0).buy == 5500.0

    def test_out_of_range(self):
        with pytest.raises(ContractViolation):
            scale_action([1.2, 0, 0, 0, 0, 0], 100.0)
        with pytest.raises(ContractViolation):
            scale_actions(np.full((2, 6), -0.1), [1.0, 1.0])

    def test_vectorized_agrees(self):
        p = np.random.default_rng(0).random((3, 6))
        ranges = np.array([10.0, 20.0, 30.0])
        out = scale_actions(p, ranges)
        for i in range(3):
            np.testing.assert_allclose(out[i], scale_action(p[i], ranges[i]).as_array())


class TestStep:
    def test_init(self):
        cfg = make_config(counts=(2, 1), needs=(1000.0, 3000.0))
        s = init_env(cfg, seed=3)
        np.testing.assert_array_equal(s.battery / cfg.battery_capacity, 0.5)
        assert s.t == 0 and not s.payoff.any()
        assert s.pool == pytest.approx(0.75 * 5000.0)
        s2 = init_env(cfg, seed=3)
        np.testing.assert_array_equal(s.battery, s2.battery)

    def test_null_action(self):
        cfg = make_config(counts=(3,))
        s = init_env(cfg)
        s2, snap = env_step(cfg, s, np.zeros((3, 6)))
        assert np.all(snap.comfort == 0) and snap.over_consumption == 0
        np.testing.assert_allclose(s2.battery, s.battery + cfg.solar_production)
        assert s2.t == 1

    def test_single_agent_consumes_pool(self):
        cfg = make_config(counts=(1,), needs=(1000.0,))
        s = init_env(cfg)
        pool = 0.75 * 1000.0
        _, snap = env_step(cfg, s, joint(cfg, consume_grid=pool))
        assert snap.pool == pool and snap.over_consumption == 0.0
        assert snap.comfort[0] == pytest.approx(min(1.0, pool / 1000.0))

    def test_two_agents_over_consume(self):
        cfg = make_config(counts=(2,), needs=(1000.0,))
        pool = 0.75 * 2000.0
        _, snap = env_step(cfg, init_env(cfg), joint(cfg, consume_grid=pool))
        assert snap.over_consumption == pytest.approx(pool)

    def test_give_feeds_pool(self):
        cfg = make_config(counts=(2,), needs=(1000.0,))
        _, snap = env_step(cfg, init_env(cfg), joint(cfg, give=100.0))
        assert snap.pool == pytest.approx(1500.0 + 200.0)

    def test_outflows_rescaled(self):
        cfg = make_config(counts=(1,), needs=(1000.0,))
        s = init_env(cfg)
        level = s.battery[0]
        _, snap = env_step(cfg, s, joint(cfg, consume_battery=level, give=level))
        assert snap.action("consume_battery")[0] == pytest.approx(level / 2)
        assert snap.action("give")[0] == pytest.approx(level / 2)
        assert snap.battery_after[0] == pytest.approx(cfg.solar_production[0])

    def test_overflow_counts_as_waste(self):
        cfg = make_config(counts=(1,), needs=(1000.0,))
        cap = cfg.battery_capacity[0]
        _, snap = env_step(cfg, init_env(cfg), joint(cfg, store=cap))
        assert snap.battery_after[0] == cap
        assert snap.waste[0] == pytest.approx(0.5 * cap + cfg.solar_production[0])

    def test_payoff(self):
        cfg = make_config(counts=(1,), needs=(1000.0,))
        s2, snap = env_step(cfg, init_env(cfg), joint(cfg, buy=500.0, sell=100.0))
        assert snap.payoff_delta[0] == pytest.approx(100.0 * cfg.sell_price - 500.0 * cfg.buy_price)
        assert s2.payoff[0] == snap.payoff_delta[0]

    def test_indicators(self):
        cfg = make_config(counts=(4,), needs=(1000.0,))
        cons = np.array([1000.0, 500.0, 100.0, 0.0])
        _, snap = env_step(cfg, init_env(cfg), joint(cfg, consume_grid=cons))
        np.testing.assert_allclose(snap.comfort, [1.0, 0.5, 0.1, 0.0])
        assert snap.well_being == pytest.approx(0.3)
        assert snap.exclusion == pytest.approx(0.5)  # 0.1 and 0 are below 0.15
        assert snap.autonomy == 1.0
        c = snap.comfort
        assert snap.equity == pytest.approx(1 - np.abs(c - c.mean()).sum() / (2 * c.sum()))

    def test_action_count_mismatch(self):
        cfg = make_config(counts=(2,))
        with pytest.raises(ContractViolation):
            env_step(cfg, init_env(cfg), np.zeros((3, 6)))

    def test_pure(self):
        cfg = make_config(counts=(3,))
        s = init_env(cfg)
        act = np.random.default_rng(0).random((3, 6)) * 1000
        a = env_step(cfg, s, act)
        b = env_step(cfg, s, act)
        np.testing.assert_array_equal(a[0].battery, b[0].battery)
        np.testing.assert_array_equal(a[1].comfort, b[1].comfort)
        assert a[1].over_consumption == b[1].over_consumption

    def test_hour_wraps(self):
        needs = np.arange(1, 25, dtype=float) * 100
        cfg = EnvConfig(roster=[(BuildingProfile.from_needs("Ramp", needs), 1)])
        s = EnvState(t=49, battery=np.array([0.0]), payoff=np.zeros(1), pool=0.0)
        _, snap = env_step(cfg, s, np.zeros((1, 6)))
        assert snap.hour == 1 and snap.need[0] == 200.0


@st.composite
def step_inputs(draw):
    n = draw(st.integers(1, 5))
    needs = draw(arrays(float, n, elements=st.floats(10, 10_000)))
    cfg = EnvConfig(roster=[(flat_profile(f"P{i}", v), 1) for i, v in enumerate(needs)],
                    scarcity_factor=draw(st.floats(0.1, 1.5)))
    fill = draw(arrays(float, n, elements=st.floats(0, 1)))
    state = EnvState(t=draw(st.integers(0, 100)), battery=fill * cfg.battery_capacity,
                     payoff=draw(arrays(float, n, elements=st.floats(-1e3, 1e3))), pool=0.0)
    params = draw(arrays(float, (n, 6), elements=st.floats(0, 1)))
    return cfg, state, scale_actions(params, cfg.action_range)


class TestProperties:
    @given(step_inputs())
    def test_bookkeeping_and_ranges(self, inputs):
        cfg, state, act = inputs
        s2, snap = env_step(cfg, state, act)
        obs = observe_all(cfg, snap, s2)
        check_snapshot(cfg, snap, obs)
        a = snap.actions
        delta = s2.battery - state.battery
        expected = a[:, 1] + cfg.solar_production - a[:, 2] - a[:, 3] - a[:, 5] - snap.waste
        assert np.all(np.abs(delta - expected) <= 1e-9)

    @given(step_inputs())
    def test_overconsumption_brute_force(self, inputs):
        cfg, state, act = inputs
        _, snap = env_step(cfg, state, act)
        pool = cfg.scarcity_factor * sum(cfg.need_at(state.t)) + sum(snap.action("give"))
        demand = sum(snap.action("consume_grid")) + sum(snap.action("store"))
        expected = demand - pool if demand > pool else 0.0
        assert snap.over_consumption == pytest.approx(expected, abs=1e-6)

    @given(step_inputs(), st.floats(0, 500))
    def test_comfort_monotone(self, inputs, extra):
        cfg, state, act = inputs
        _, snap = env_step(cfg, state, act)
        more = act.copy()
        more[:, 0] += extra
        _, snap2 = env_step(cfg, state, more)
        assert np.all(snap2.comfort >= snap.comfort)


class TestObserve:
    def test_shape_and_range(self):
        env = SmartGridEnv(make_config(counts=(3,)))
        obs = env.reset()
        assert obs.shape == (3, OBS_DIM)
        for _ in range(30):
            obs, _ = env.step(np.random.default_rng(0).random((3, 6)))
            assert np.all((obs >= 0) & (obs <= 1))

    def test_hour_coordinate(self):
        cfg = make_config(counts=(1,))
        s = EnvState(t=12, battery=np.zeros(1), payoff=np.zeros(1), pool=0.0)
        obs = observe(cfg, initial_snapshot(cfg, s), s, 0)
        assert obs[0] == 0.5

    def test_empty_battery(self):
        cfg = make_config(counts=(1,))
        s = EnvState(t=0, battery=np.zeros(1), payoff=np.zeros(1), pool=0.0)
        assert observe(cfg, initial_snapshot(cfg, s), s, 0)[8] == 0.0

    def test_unknown_agent(self):
        cfg = make_config(counts=(1,))
        s = init_env(cfg)
        with pytest.raises(ContractViolation):
            observe(cfg, initial_snapshot(cfg, s), s, 1)

    def test_step_before_reset(self):
        with pytest.raises(ContractViolation):
            SmartGridEnv(make_config()).step(np.zeros((2, 6)))
