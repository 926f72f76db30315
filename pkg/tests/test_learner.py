import copy
import dataclasses

import numpy as np
import pytest
import torch
from conftest import assert_gradients_match

from divmarl.agents import AgentNetwork
from divmarl.config import ExploreConfig, LearnerConfig, RunConfig, apply_ablation
from divmarl.diversity import IntrinsicConfig
from divmarl.envs.pacmen import PacMenEnv
from divmarl.learner import (
    METRIC_COLUMNS,
    Learner,
    compute_losses,
    l1_penalty,
    l1_weight_penalty,
    masked_mse,
    sequence_q,
    td_loss,
    td_target,
    train_run,
)
from divmarl.mixer import build_mixer
from divmarl.replay import Episode, EpisodeBatch, ReplayBuffer, collate


# ------------------------------------------------------------- td helpers


def _scalars(*values):
    return [torch.tensor([[float(v)]]) for v in values]


def test_td_loss_hand_oracle():
    # r_env=1, beta=0, gamma=0.9, bootstrap value 2, prediction 2.5:
    # target 1 + 0.9*2 = 2.8, squared error (2.5 - 2.8)^2 = 0.09
    r_env, r_int, terminal, next_value, pred, mask = _scalars(1, 99, 0, 2, 2.5, 1)
    target = td_target(r_env, r_int, beta=0.0, gamma=0.9, terminal=terminal, next_value=next_value)
    assert float(target) == pytest.approx(2.8, abs=1e-7)
    assert float(masked_mse(pred, target, mask)) == pytest.approx(0.09, abs=1e-7)


def test_td_target_terminal_kills_bootstrap():
    r_env, r_int, terminal, next_value = _scalars(1, 2, 1, 50)
    target = td_target(r_env, r_int, beta=0.5, gamma=0.99, terminal=terminal, next_value=next_value)
    assert float(target) == pytest.approx(1.0 + 0.5 * 2.0, abs=1e-7)


def test_td_target_scales_intrinsic_by_beta():
    r_env, r_int, terminal, next_value = _scalars(0, 3, 0, 0)
    for beta in (0.0, 0.15, 1.0):
        target = td_target(r_env, r_int, beta, gamma=0.9, terminal=terminal, next_value=next_value)
        assert float(target) == pytest.approx(beta * 3.0, abs=1e-7)


def test_masked_mse_ignores_padded_steps():
    pred = torch.tensor([[1.0, 100.0]])
    target = torch.tensor([[0.0, 0.0]])
    mask = torch.tensor([[1.0, 0.0]])
    assert float(masked_mse(pred, target, mask)) == pytest.approx(1.0)


def test_masked_mse_empty_mask_is_zero():
    pred = torch.ones(1, 3)
    target = torch.zeros(1, 3)
    assert float(masked_mse(pred, target, torch.zeros(1, 3))) == 0.0


def test_bellman_fixed_point_zero_loss():
    # self-consistent values: target(r, gamma, next) == prediction at each step
    gamma = 0.9
    next_value = torch.tensor([[2.0, 0.0]])
    r_env = torch.tensor([[0.5, 1.0]])
    terminal = torch.tensor([[0.0, 1.0]])
    zeros = torch.zeros_like(r_env)
    pred = td_target(r_env, zeros, 0.0, gamma, terminal, next_value)
    mask = torch.ones_like(r_env)
    assert float(masked_mse(pred, pred.clone(), mask)) == 0.0


# ------------------------------------------------------------- l1 penalty


def test_l1_zero_outputs():
    q_ind = torch.zeros(2, 3, 2, 4)
    mask = torch.ones(2, 3)
    assert torch.equal(l1_penalty(q_ind, mask), torch.zeros(2))


def test_l1_hand_oracle():
    # one batch entry, one step, one agent, outputs [1, -1]: mean |.| = 1.0
    q_ind = torch.tensor([[[[1.0, -1.0]]]])
    mask = torch.ones(1, 1)
    assert torch.allclose(l1_penalty(q_ind, mask), torch.tensor([1.0]))


def test_l1_positive_homogeneity():
    g = torch.Generator().manual_seed(0)
    q_ind = torch.randn(2, 4, 3, 5, generator=g)
    mask = torch.ones(2, 4)
    base = l1_penalty(q_ind, mask)
    assert torch.allclose(l1_penalty(3.0 * q_ind, mask), 3.0 * base, atol=1e-6)


def test_l1_masked_steps_carry_no_weight():
    q_ind = torch.ones(1, 2, 2, 3)
    q_ind[:, 1] = 1000.0
    mask = torch.tensor([[1.0, 0.0]])
    assert torch.allclose(l1_penalty(q_ind, mask), torch.ones(2))


def test_l1_weight_penalty_without_heads(micro_spec):
    agent = AgentNetwork(micro_spec, hidden_dim=8, individual_heads=False, id_in_input=True)
    assert torch.equal(l1_weight_penalty(agent), torch.zeros(micro_spec.n_agents))


def test_l1_weight_penalty_zeroed_heads(micro_spec):
    agent = AgentNetwork(micro_spec, hidden_dim=8)
    with torch.no_grad():
        for head in agent.individual_heads:
            for p in head.parameters():
                p.zero_()
    assert torch.allclose(l1_weight_penalty(agent), torch.zeros(micro_spec.n_agents))


# ------------------------------------------------------------- full losses


def _micro_batch(micro_spec, batch_size=2, steps=3, seed=0) -> EpisodeBatch:
    g = torch.Generator().manual_seed(seed)
    n, a_dim = micro_spec.n_agents, micro_spec.n_actions
    mask = torch.ones(batch_size, steps)
    terminal = torch.zeros(batch_size, steps)
    terminal[:, -1] = 1.0
    return EpisodeBatch(
        obs=torch.rand(batch_size, steps + 1, n, micro_spec.obs_dim, generator=g),
        state=torch.rand(batch_size, steps + 1, micro_spec.state_dim, generator=g),
        actions=torch.randint(0, a_dim, (batch_size, steps, n), generator=g),
        reward_env=torch.randn(batch_size, steps, generator=g),
        reward_int=torch.randn(batch_size, steps, generator=g),
        terminal=terminal,
        mask=mask,
    )


def _micro_models(micro_spec, seed=0):
    torch.manual_seed(seed)
    agent = AgentNetwork(micro_spec, hidden_dim=8)
    mixer = build_mixer("dueling", micro_spec.n_agents, micro_spec.state_dim)
    return agent, mixer, copy.deepcopy(agent), copy.deepcopy(mixer)


def test_total_is_td_plus_weighted_l1(micro_spec):
    batch = _micro_batch(micro_spec)
    agent, mixer, t_agent, t_mixer = _micro_models(micro_spec)
    with torch.no_grad():
        parts = compute_losses(batch, agent, mixer, t_agent, t_mixer, 0.9, 0.15, 0.01)
        expected = parts.td + 0.01 * parts.l1_per_agent.sum()
        assert float(parts.total) == pytest.approx(float(expected), rel=1e-6)

        zero = compute_losses(batch, agent, mixer, t_agent, t_mixer, 0.9, 0.15, 0.0)
        assert float(zero.total) == pytest.approx(float(zero.td), rel=1e-7)


def test_beta_zero_ignores_intrinsic_rewards(micro_spec):
    batch = _micro_batch(micro_spec)
    agent, mixer, t_agent, t_mixer = _micro_models(micro_spec)
    scrambled = dataclasses.replace(batch, reward_int=batch.reward_int * 1000 + 7)
    a = td_loss(batch, agent, mixer, t_agent, t_mixer, 0.9, 0.0)
    b = td_loss(scrambled, agent, mixer, t_agent, t_mixer, 0.9, 0.0)
    assert float(a) == pytest.approx(float(b), rel=1e-9)
    c = td_loss(scrambled, agent, mixer, t_agent, t_mixer, 0.9, 0.15)
    assert float(c) != pytest.approx(float(a), rel=1e-3)


def test_padded_steps_do_not_change_losses(micro_spec):
    batch = _micro_batch(micro_spec)
    mask = batch.mask.clone()
    mask[:, -1] = 0.0
    batch = dataclasses.replace(batch, mask=mask)
    agent, mixer, t_agent, t_mixer = _micro_models(micro_spec)
    base = compute_losses(batch, agent, mixer, t_agent, t_mixer, 0.9, 0.15, 0.01)

    # scribble over the padded step's inputs
    obs = batch.obs.clone()
    obs[:, -1] = 9.0
    rewards = batch.reward_env.clone()
    rewards[:, -1] = -100.0
    scribbled = dataclasses.replace(batch, obs=obs, reward_env=rewards)
    redo = compute_losses(scribbled, agent, mixer, t_agent, t_mixer, 0.9, 0.15, 0.01)
    assert float(redo.td) == pytest.approx(float(base.td), rel=1e-6)
    assert float(redo.total) == pytest.approx(float(base.total), rel=1e-6)


def test_loss_gradients_match_finite_differences(micro_spec):
    torch.set_default_dtype(torch.float64)
    try:
        batch = _micro_batch(micro_spec, batch_size=1, steps=2)
        batch = dataclasses.replace(
            batch,
            obs=batch.obs.double(),
            state=batch.state.double(),
            reward_env=batch.reward_env.double(),
            reward_int=batch.reward_int.double(),
            terminal=batch.terminal.double(),
            mask=batch.mask.double(),
        )
        agent, mixer, t_agent, t_mixer = _micro_models(micro_spec)

        def loss_fn():
            return compute_losses(batch, agent, mixer, t_agent, t_mixer, 0.9, 0.15, 0.01).total

        params = list(agent.parameters()) + list(mixer.parameters())
        assert_gradients_match(loss_fn, params)
    finally:
        torch.set_default_dtype(torch.float32)


def test_sequence_q_matches_stepwise_encoding(micro_spec):
    batch = _micro_batch(micro_spec)
    torch.manual_seed(3)
    agent = AgentNetwork(micro_spec, hidden_dim=8)
    q, tau = sequence_q(agent, batch)
    assert q.q_total.shape == (2, 4, micro_spec.n_agents, micro_spec.n_actions)

    import torch.nn.functional as F

    with torch.no_grad():
        hidden = agent.init_hidden(batch.batch_size)
        onehot = F.one_hot(batch.actions, micro_spec.n_actions).float()
        for t in range(batch.seq_len + 1):
            prev = torch.zeros_like(onehot[:, 0]) if t == 0 else onehot[:, t - 1]
            hidden = agent.encode_step(batch.obs[:, t], prev, hidden)
            step_q = agent.q_values(hidden)
            assert torch.allclose(step_q.q_total, q.q_total[:, t], atol=1e-5)
            assert torch.allclose(hidden, tau[:, t], atol=1e-5)


# ------------------------------------------------------------- replay


def _dummy_episode(micro_spec, seed: int, steps: int = 4) -> Episode:
    rng = np.random.default_rng(seed)
    limit = micro_spec.episode_limit
    mask = np.zeros(limit, dtype=np.float32)
    mask[:steps] = 1.0
    terminal = np.zeros(limit, dtype=np.float32)
    terminal[steps - 1] = 1.0
    return Episode(
        obs=rng.random((limit + 1, micro_spec.n_agents, micro_spec.obs_dim)).astype(np.float32),
        state=rng.random((limit + 1, micro_spec.state_dim)).astype(np.float32),
        actions=rng.integers(0, micro_spec.n_actions, (limit, micro_spec.n_agents)),
        reward_env=rng.random(limit).astype(np.float32),
        reward_int=np.zeros(limit, dtype=np.float32),
        int_action=np.zeros(limit, dtype=np.float32),
        int_obs=np.zeros(limit, dtype=np.float32),
        terminal=terminal,
        mask=mask,
        env_seed=seed,
    )


def test_episode_shape_validation(micro_spec):
    ep = _dummy_episode(micro_spec, 0)
    with pytest.raises(ValueError):
        Episode(
            obs=ep.obs[:-1],
            state=ep.state,
            actions=ep.actions,
            reward_env=ep.reward_env,
            reward_int=ep.reward_int,
            int_action=ep.int_action,
            int_obs=ep.int_obs,
            terminal=ep.terminal,
            mask=ep.mask,
            env_seed=0,
        )
    with pytest.raises(ValueError):
        Episode(
            obs=ep.obs,
            state=ep.state,
            actions=ep.actions,
            reward_env=ep.reward_env[:-1],
            reward_int=ep.reward_int,
            int_action=ep.int_action,
            int_obs=ep.int_obs,
            terminal=ep.terminal,
            mask=ep.mask,
            env_seed=0,
        )
    assert ep.length == 4


def test_buffer_fifo_eviction(micro_spec):
    buf = ReplayBuffer(2)
    for seed in range(3):
        buf.add(_dummy_episode(micro_spec, seed))
    assert len(buf) == 2
    rng = np.random.default_rng(0)
    seeds = {ep.env_seed for ep in buf.sample(rng, 2)}
    assert seeds == {1, 2}


def test_buffer_sampling_contract(micro_spec):
    buf = ReplayBuffer(8)
    assert not buf.can_sample(1)
    with pytest.raises(ValueError):
        buf.sample(np.random.default_rng(0), 1)
    for seed in range(4):
        buf.add(_dummy_episode(micro_spec, seed))
    assert buf.can_sample(4) and not buf.can_sample(5)
    picked = buf.sample(np.random.default_rng(1), 4)
    assert sorted(ep.env_seed for ep in picked) == [0, 1, 2, 3]


def test_buffer_capacity_validation():
    with pytest.raises(ValueError):
        ReplayBuffer(0)


def test_collate_requires_common_length(micro_spec):
    with pytest.raises(ValueError):
        collate([])
    good = [_dummy_episode(micro_spec, s) for s in range(2)]
    batch = collate(good)
    assert batch.batch_size == 2
    assert batch.seq_len == micro_spec.episode_limit
    assert batch.actions.dtype == torch.int64


# ------------------------------------------------------------- learner


def _tiny_run_config(**overrides) -> RunConfig:
    learner_kwargs = {
        "batch_size": 4,
        "buffer_capacity": 16,
        "updates_per_episode": 1,
        "target_update_interval": 3,
    }
    learner_kwargs.update(overrides.pop("learner_overrides", {}))
    defaults = {
        "total_env_steps": 800,
        "eval_interval": 0,
        "hidden_dim": 16,
        "learner": LearnerConfig(**learner_kwargs),
        "explore": ExploreConfig(anneal_steps=400),
        "intrinsic": IntrinsicConfig(),
    }
    defaults.update(overrides)
    return RunConfig(**defaults)


def test_learner_refuses_unmaterialized_ablation():
    cfg = _tiny_run_config(learner_overrides={"ablation": "all_shared"})
    with pytest.raises(ValueError):
        Learner(cfg, PacMenEnv(), 0)
    Learner(apply_ablation(cfg), PacMenEnv(), 0)  # materialized form is accepted


def test_collect_episode_accounting():
    cfg = _tiny_run_config()
    learner = Learner(cfg, PacMenEnv(), 0)
    episode, stats = learner.collect_episode(1.0)
    limit = learner.env.spec.episode_limit
    assert stats["length"] == limit  # this world only ends by truncation
    assert learner.env_steps == limit
    assert learner.episodes == 1
    assert episode.mask.sum() == limit
    assert episode.terminal[limit - 1] == 1.0
    assert np.isfinite(episode.reward_int).all()
    assert np.allclose(episode.reward_int, episode.int_action + episode.int_obs, atol=1e-5)
    assert stats["return"] == pytest.approx(float(episode.reward_env.sum()), abs=1e-5)


def test_collect_episode_deterministic_across_learners():
    a = Learner(_tiny_run_config(), PacMenEnv(), 7)
    b = Learner(_tiny_run_config(), PacMenEnv(), 7)
    ep_a, _ = a.collect_episode(0.3)
    ep_b, _ = b.collect_episode(0.3)
    assert ep_a.env_seed == ep_b.env_seed
    assert np.array_equal(ep_a.actions, ep_b.actions)
    assert np.array_equal(ep_a.obs, ep_b.obs)
    assert np.allclose(ep_a.reward_int, ep_b.reward_int, atol=0.0)


def test_collect_episode_seed_sensitivity():
    a = Learner(_tiny_run_config(), PacMenEnv(), 0)
    b = Learner(_tiny_run_config(), PacMenEnv(), 1)
    ep_a, _ = a.collect_episode(1.0)
    ep_b, _ = b.collect_episode(1.0)
    assert ep_a.env_seed != ep_b.env_seed or not np.array_equal(ep_a.actions, ep_b.actions)


def test_update_waits_for_buffer():
    learner = Learner(_tiny_run_config(), PacMenEnv(), 0)
    assert learner.update() is None
    for _ in range(4):
        ep, _ = learner.collect_episode(1.0)
        learner.buffer.add(ep)
    losses = learner.update()
    assert losses is not None
    for key in ("td_loss", "l1_loss", "total_loss"):
        assert np.isfinite(losses[key])
    assert learner.train_steps == 1


def test_target_sync_interval():
    learner = Learner(_tiny_run_config(), PacMenEnv(), 0)
    for _ in range(4):
        ep, _ = learner.collect_episode(1.0)
        learner.buffer.add(ep)

    def targets_match() -> bool:
        cur = learner.agent.state_dict()
        tgt = learner.target_agent.state_dict()
        return all(torch.equal(cur[k], tgt[k]) for k in cur)

    assert targets_match()  # fresh copies
    learner.update()
    assert not targets_match()  # one optimizer step, no sync yet
    learner.update()
    assert not targets_match()
    learner.update()  # train_steps hits the interval of 3
    assert targets_match()


def test_update_determinism_across_learners():
    losses = []
    for _ in range(2):
        learner = Learner(_tiny_run_config(), PacMenEnv(), 11)
        for _ in range(4):
            ep, _ = learner.collect_episode(0.5)
            learner.buffer.add(ep)
        losses.append(learner.update())
    assert losses[0]["total_loss"] == losses[1]["total_loss"]
    assert losses[0]["td_loss"] == losses[1]["td_loss"]


def test_intrinsic_recompute_overrides_stored_rewards():
    """Scribbled stored bonuses only matter when recompute is off."""

    def fresh(recompute: bool, scribble: bool) -> float:
        cfg = _tiny_run_config(
            learner_overrides={"intrinsic_recompute": recompute, "batch_size": 3}
        )
        learner = Learner(cfg, PacMenEnv(), 3)
        for _ in range(3):
            ep, _ = learner.collect_episode(1.0)
            if scribble:
                ep.reward_int = ep.reward_int + 5.0 * ep.mask
            learner.buffer.add(ep)
        return learner.update()["td_loss"]

    clean_stored = fresh(False, False)
    dirty_stored = fresh(False, True)
    dirty_recomputed = fresh(True, True)
    assert dirty_stored != pytest.approx(clean_stored, rel=1e-6)
    # before any optimizer step the current nets equal the collection-time
    # nets, so recomputation restores exactly the clean stored values
    assert dirty_recomputed == pytest.approx(clean_stored, rel=1e-6)


# ------------------------------------------------------------- train_run


def test_train_run_metric_stream():
    cfg = _tiny_run_config(total_env_steps=600)
    rows = list(train_run(cfg, 0))
    assert len(rows) == 6  # 100-step episodes
    for row in rows:
        assert set(row.keys()) == set(METRIC_COLUMNS)
    assert rows[0]["epsilon"] == 1.0
    eps = [row["epsilon"] for row in rows]
    assert all(a >= b for a, b in zip(eps, eps[1:]))
    assert rows[-1]["env_steps"] == 600
    assert all(row["wall_clock"] == 0.0 for row in rows)
    assert np.isnan(rows[0]["td_loss"])  # buffer not yet sampleable
    assert np.isfinite(rows[-1]["td_loss"])


def test_train_run_identical_streams_for_same_seed():
    cfg = _tiny_run_config(total_env_steps=500)
    rows_a = list(train_run(cfg, 5))
    rows_b = list(train_run(cfg, 5))
    for a, b in zip(rows_a, rows_b):
        for key in METRIC_COLUMNS:
            va, vb = a[key], b[key]
            if isinstance(va, float) and np.isnan(va):
                assert np.isnan(vb)
            else:
                assert va == vb, key


def test_train_run_applies_ablation_tag():
    cfg = _tiny_run_config(total_env_steps=200)
    cfg = dataclasses.replace(
        cfg, learner=dataclasses.replace(cfg.learner, ablation="all_shared")
    )
    learner = Learner(apply_ablation(cfg), PacMenEnv(), 0)
    rows = list(train_run(cfg, 0, learner=learner))
    assert learner.agent.individual_heads is None
    assert all(row["l1_loss"] == 0.0 or np.isnan(row["l1_loss"]) for row in rows)
