import pytest

from surveyq.dataprep import rank_features, split, synth_generate
from surveyq.environment import Action
from surveyq.evaluation import evaluate
from surveyq.sl import SlConfig, make_fixed_input, sl_as_policy, sl_env_config, train_sl

from conftest import assert_accounting, tiny_dataset


class TestMakeFixedInput:
    def test_top_k_rows_revealed(self):
        ds = tiny_dataset()
        record = ds.records[1]  # features (1, 2)
        state = make_fixed_input(record, 2, (1, 0), ds.schema)
        assert state[1, 2] == 1.0 and state[0, 1] == 1.0
        assert state.sum() == 2.0

    def test_k_one_reveals_best_ranked_only(self):
        ds = tiny_dataset()
        record = ds.records[1]
        state = make_fixed_input(record, 1, (1, 0), ds.schema)
        assert state[1, 2] == 1.0
        assert state.sum() == 1.0

    def test_full_reveal(self):
        ds = tiny_dataset()
        record = ds.records[3]
        state = make_fixed_input(record, 2, (0, 1), ds.schema)
        assert state.sum() == 2.0

    def test_k_zero_rejected_by_config(self):
        with pytest.raises(ValueError):
            SlConfig(k=0)


@pytest.fixture(scope="module")
def sl_setup(perfect_spec):
    ds = synth_generate(perfect_spec, 2000, seed=3)
    ds, _ = rank_features(ds)
    return split(ds, 0.2, seed=0)


class TestTrainSl:
    def test_deterministic_per_seed(self, sl_setup):
        train, _ = sl_setup
        cfg = SlConfig(k=2, epochs=2, seed=4)
        net1, log1 = train_sl(cfg, train)
        net2, log2 = train_sl(cfg, train)
        assert net1.checksum_bytes() == net2.checksum_bytes()
        assert log1.rows == log2.rows

    def test_perfect_feature_reaches_high_accuracy(self, sl_setup):
        train, test = sl_setup
        cfg = SlConfig(k=2, epochs=6, seed=1)
        net, _ = train_sl(cfg, train)
        env = sl_env_config(2, train.feature_order)
        policy = sl_as_policy(net, 2, train.feature_order, train.schema, env)
        metrics = evaluate(policy, test, env, n_episodes=500, seed=2)
        assert metrics.accuracy >= 0.98

    def test_label_independent_data_stays_at_chance(self, independent_spec):
        ds = synth_generate(independent_spec, 2000, seed=5)
        ds, _ = rank_features(ds)
        train, _ = split(ds, 0.2, seed=0)
        net, _ = train_sl(SlConfig(k=2, epochs=4, seed=2), train)
        env = sl_env_config(2, train.feature_order)
        policy = sl_as_policy(net, 2, train.feature_order, train.schema, env)
        # score on a large fresh draw so finite-test-set noise stays below
        # the tolerance; Bayes accuracy is exactly 0.5 here
        fresh = synth_generate(independent_spec, 6000, seed=77)
        metrics = evaluate(policy, fresh, env, n_episodes=4000, seed=3)
        assert metrics.accuracy == pytest.approx(0.5, abs=0.03)

    def test_k_larger_than_schema_rejected(self, sl_setup):
        train, _ = sl_setup
        with pytest.raises(ValueError):
            train_sl(SlConfig(k=3), train)

    def test_lr_endpoints_on_log(self, sl_setup):
        train, _ = sl_setup
        cfg = SlConfig(k=2, epochs=2, seed=0)
        _, log = train_sl(cfg, train)
        assert len(log.rows) == 2
        # last logged lr is the final step's annealed value, short of lr_end
        assert cfg.lr_end < log.rows[-1].lr < cfg.lr_start


class TestSlPolicy:
    def test_query_sequence_is_fixed(self, sl_setup):
        train, test = sl_setup
        net, _ = train_sl(SlConfig(k=2, epochs=1, seed=0), train)
        env = sl_env_config(2, train.feature_order)
        policy = sl_as_policy(net, 2, train.feature_order, train.schema, env)
        assert policy.act({}, 0) == Action("query", 0)
        first_feature = train.feature_order[0]
        assert policy.act({first_feature: 1}, 1) == Action("query", 1)
        action = policy.act({0: 1, 1: 0}, 2)
        assert action.kind == "predict"

    def test_avg_queries_exactly_k_and_identity(self, sl_setup):
        train, test = sl_setup
        for k in (1, 2):
            net, _ = train_sl(SlConfig(k=k, epochs=1, seed=0), train)
            env = sl_env_config(k, train.feature_order, min_queries=min(2, k))
            policy = sl_as_policy(net, k, train.feature_order, train.schema, env)
            metrics = evaluate(policy, test, env, n_episodes=200, seed=1)
            assert metrics.avg_queries == float(k)
            assert metrics.violation_count == 0
            assert_accounting(metrics)

    def test_episode_return_for_correct_prediction_at_k4(self, adaptive8_data):
        train, test = adaptive8_data
        net, _ = train_sl(SlConfig(k=4, epochs=1, seed=0), train)
        env = sl_env_config(4, train.feature_order)
        policy = sl_as_policy(net, 4, train.feature_order, train.schema, env)
        from surveyq.evaluation import run_episode

        # find a record the classifier gets right; its return must be 0.80
        for record in test.records[:50]:
            outcome = run_episode(policy, record, env)
            if outcome.correct:
                assert outcome.ret == pytest.approx(1.0 - 0.20)
                break
        else:
            pytest.fail("classifier got every probe record wrong")
