"""Lowering and concrete execution against hand-computed expectations."""

import json
from fractions import Fraction

import pytest

from conftest import fixture_text
from minisol.invariants import instrument, parse_candidate, parse_candidates
from minisol.lang import ast, load_contract
from minisol.semantics import (
    CallFrame,
    ContractState,
    DomainConfig,
    GAS_CANDIDATE_KEY,
    Interp,
    LoopBoundRevert,
    Transaction,
    lower,
    run,
    search_violation,
    transaction_space,
)


def contract(name):
    return load_contract(fixture_text(f"{name}.msol"), path=f"{name}.msol")


def system(name, candidates=(), cfg=None, k=None):
    ir = contract(name)
    if candidates:
        parsed = parse_candidates([(c, k) for c in candidates], ir)
        from minisol.invariants import instrument_all

        ir = instrument_all(ir, parsed)
    return lower(ir, cfg or DomainConfig())


def tx(function, sender=1, args=(), delta=0):
    return Transaction(function, sender, tuple(args), delta)


# -- lowering shape -----------------------------------------------------------


class TestLowering:
    def test_steps_in_declaration_order_then_tokens(self):
        ts = system("timelock_governor")
        assert list(ts.steps) == [
            "startExecute",
            "execute",
            "endExecute",
            "votingToken.transfer",
            "votingToken.transferFrom",
        ]

    def test_internal_call_becomes_frame(self):
        ts = system("priced_vault")
        frame = ts.steps["deposit"].body[0]
        assert isinstance(frame, CallFrame)
        assert frame.func == "getRealPrice"
        assert frame.body  # the callee's statements ride along

    def test_loop_unrolled_to_bound(self):
        ts = system("queued_vault")
        node = ts.steps["processDeposits"].body[1]
        depth = 0
        while isinstance(node, ast.If):
            node = node.then[-1]
            depth += 1
        assert isinstance(node, LoopBoundRevert)
        assert depth == 5  # 4 unrolled iterations + the bound check

    def test_token_steps_have_stub_kinds(self):
        ts = system("timelock_governor")
        assert ts.steps["votingToken.transfer"].kind == "token-transfer"
        assert ts.steps["votingToken.transferFrom"].kind == "token-transferfrom"


# -- plain execution ----------------------------------------------------------


class TestCounter:
    def test_increments(self):
        ts = system("counter")
        trace = run(ts, (), [tx("inc"), tx("inc")])
        assert [r.status for r in trace.records] == ["ok", "ok", "ok"]
        assert trace.final.scalars["x"] == 2

    def test_invariant_breaks_on_second_inc(self):
        ts = system("counter", ["7+ Invariant(x <= 1);"])
        trace = run(ts, (), [tx("inc"), tx("inc"), tx("inc")])
        assert trace.violation is not None
        key, idx = trace.violation
        assert key.startswith("7+")
        assert idx == 2  # deployment is record 0
        assert len(trace.records) == 3  # nothing runs past the violation


class TestTokenLedger:
    def test_deploy_values(self):
        ts = system("token_ledger")
        trace = run(ts)
        assert trace.final.scalars == {"totalSupply": 200, "tokens": 10, "owner": 1}

    def test_transfer_to_other_underflows_and_reverts(self):
        ts = system("token_ledger")
        trace = run(ts, (), [tx("transfer", sender=1, args=(0,))])
        assert trace.records[1].status == "reverted"
        # rollback: poststate digest matches prestate digest
        assert trace.records[1].post_digest == trace.records[1].pre_digest

    def test_transfer_to_self_survives(self):
        ts = system("token_ledger")
        trace = run(ts, (), [tx("transfer", sender=1, args=(1,))])
        assert trace.records[1].status == "ok"
        assert trace.final.mappings["balances"] == {(1,): 0}

    def test_wrap_mode_underflow_wraps(self):
        ts = system("token_ledger", cfg=DomainConfig(arith="wrap"))
        trace = run(ts, (), [tx("transfer", sender=1, args=(0,))])
        assert trace.records[1].status == "ok"
        assert trace.final.mappings["balances"][(1,)] == 246  # 0 - 10 mod 256

    def test_token_increase_compounds(self):
        ts = system("token_ledger")
        trace = run(ts, (), [tx("tokenIncrease", sender=2), tx("tokenIncrease", sender=2)])
        assert trace.final.scalars["tokens"] == 12  # 10 -> 11 -> 12

    def test_balance_check_catches_missing_funds(self):
        ts = system("token_ledger", ["7+ assert(balances[msg.sender] >= tokens);"])
        trace = run(ts, (), [tx("transfer", sender=1, args=(0,))])
        assert trace.violation == ("7+ assert(balances[msg.sender] >= tokens);", 1)

    def test_sum_check_catches_supply_mismatch(self):
        ts = system("token_ledger", ["8+ assert(sumMapping(balances) == totalSupply);"])
        trace = run(ts, (), [tx("transfer", sender=1, args=(1,))])
        assert trace.violation == ("8+ assert(sumMapping(balances) == totalSupply);", 1)

    def test_modifier_pair_locks_out_strangers(self):
        ts = system(
            "token_ledger",
            [
                "10+ modifier onlyOwner{require(msg.sender==owner);};",
                "12 function tokenIncrease() onlyOwner external {...};",
            ],
        )
        blocked = run(ts, (), [tx("tokenIncrease", sender=2)])
        assert blocked.records[1].status == "reverted"
        allowed = run(ts, (), [tx("tokenIncrease", sender=1)])
        assert allowed.records[1].status == "ok"
        assert allowed.final.scalars["tokens"] == 11

    def test_call_term_invariant_fails_at_deployment(self):
        ts = system("token_ledger", ["17+ Invariant(tokenIncrease() > 100);"])
        trace = run(ts)
        assert trace.violation == ("17+ Invariant(tokenIncrease() > 100);", 0)

    def test_call_term_scratch_state_is_discarded(self):
        ts = system("token_ledger", ["17+ Invariant(tokenIncrease() > 100);"])
        trace = run(ts)
        assert trace.final.scalars["tokens"] == 10  # probe run did not stick


class TestTimelock:
    def bypass(self):
        return [
            tx("startExecute", sender=2, delta=1),
            tx("votingToken.transfer", sender=2, args=(0, 51)),
            tx("endExecute", sender=2, delta=25),
        ]

    def test_honest_flow(self):
        ts = system("timelock_governor")
        trace = run(
            ts,
            (),
            [
                tx("startExecute", sender=1, delta=1),
                tx("execute", sender=1, args=(5,)),
            ],
        )
        assert [r.status for r in trace.records] == ["ok", "ok", "ok"]
        assert trace.final.balances["votingToken"][0] == 5
        assert trace.final.balances["votingToken"][1] == 5

    def test_execute_window_closes(self):
        ts = system("timelock_governor")
        trace = run(
            ts,
            (),
            [
                tx("startExecute", sender=1, delta=1),
                tx("execute", sender=1, args=(5,), delta=30),  # 1 + 24 < 31
            ],
        )
        assert trace.records[2].status == "reverted"

    def test_reserve_injection_bypasses_vote(self):
        ts = system("timelock_governor")
        trace = run(ts, (), self.bypass())
        assert [r.status for r in trace.records] == ["ok", "ok", "ok", "ok"]
        assert trace.final.scalars["owner"] == 2  # takeover

    def test_injection_amount_capped_by_reserve(self):
        ts = system("timelock_governor")
        trace = run(ts, (), [tx("votingToken.transfer", sender=2, args=(0, 91))])
        assert trace.records[1].status == "reverted"  # only 90 uncirculated

    def test_deposit_check_holds_on_honest_flow(self):
        ts = system(
            "timelock_governor",
            [
                "19+ assert(votingToken.balanceOf(address(this)) == "
                "Old(votingToken.balanceOf(address(this))) + amount);"
            ],
        )
        trace = run(
            ts,
            (),
            [tx("startExecute", sender=1, delta=1), tx("execute", sender=1, args=(7,))],
        )
        assert trace.violation is None

    def test_stability_check_exposes_bypass(self):
        ts = system(
            "timelock_governor",
            [
                "25+ assert(Old(votingToken.balanceOf(address(this))) == "
                "votingToken.balanceOf(address(this)));"
            ],
        )
        trace = run(ts, (), self.bypass())
        assert trace.violation is not None
        assert trace.violation[1] == 3
        # the snapshot was captured at the injection's entry, before credit
        assert trace.final.snapshots == {"__old0": 0}


class TestPricedVault:
    def test_deploy_prices_at_par(self):
        ts = system("priced_vault")
        trace = run(ts)
        assert trace.final.scalars["price"] == 1
        assert trace.final.balances == {"token0": {0: 10}, "token1": {0: 30 - 20}}
        assert trace.final.supply == {"token0": 10, "token1": 100}

    def test_donation_inflates_price(self):
        ts = system("priced_vault")
        trace = run(
            ts,
            (),
            [tx("token1.transfer", sender=2, args=(0, 20)), tx("deposit", sender=2, args=(0, 0, 0))],
        )
        assert trace.final.scalars["price"] == 3  # 30 token1 / 10 token0

    def test_volatility_check_fires_at_k2(self):
        ts = system("priced_vault", ["15+ assert(price <= Old(price) * k);"])
        trace = run(
            ts,
            (),
            [tx("token1.transfer", sender=2, args=(0, 20)), tx("deposit", sender=2, args=(0, 0, 0))],
        )
        assert trace.violation == ("15+ assert(price <= Old(price) * k);", 2)

    def test_volatility_check_quiet_at_k200(self):
        ts = system("priced_vault", ["15+ assert(price <= Old(price) * k);"], k=Fraction(200))
        trace = run(
            ts,
            (),
            [tx("token1.transfer", sender=2, args=(0, 20)), tx("deposit", sender=2, args=(0, 0, 0))],
        )
        assert trace.violation is None

    def test_honest_deposit_moves_funds(self):
        ts = system("priced_vault")
        trace = run(
            ts,
            (),
            [
                # the buyer is funded out of the vault's own reserve (strict path)
                tx("token0.transferFrom", sender=2, args=(0, 2, 4)),
                tx("deposit", sender=2, args=(4, 0, 2)),
            ],
        )
        assert trace.records[2].status == "ok"
        assert trace.final.balances["token0"] == {0: 10, 2: 0}
        assert trace.final.mappings["sharesOf"][(2,)] == 4  # 4 * floor(10/6)

    def test_no_reserve_blocks_world_funding(self):
        ts = system("priced_vault")
        trace = run(ts, (), [tx("token0.transfer", sender=2, args=(2, 4))])
        assert trace.records[1].status == "reverted"  # token0 fully circulated


class TestMessageBridge:
    def test_zero_root_lets_zero_hash_through(self):
        ts = system("message_bridge", ["11+ assert(_msgHash != 0);"])
        trace = run(ts, (0,), [tx("process", sender=2, args=(0,))])
        assert trace.violation == ("11+ assert(_msgHash != 0);", 1)

    def test_nonzero_root_blocks_zero_hash(self):
        ts = system("message_bridge", ["11+ assert(_msgHash != 0);"])
        trace = run(ts, (5,), [tx("process", sender=2, args=(0,))])
        assert trace.records[1].status == "reverted"
        ok = run(ts, (5,), [tx("process", sender=2, args=(5,))])
        assert ok.records[1].status == "ok"
        assert ok.violation is None


class TestMiniToken:
    def test_guarded_transfer_preserves_sum(self):
        ts = system("mini_token", ["14+ assert(sumMapping(balances) == totalSupply);"])
        trace = run(
            ts, (100,), [tx("transfer", sender=1, args=(2, 30)), tx("transfer", sender=1, args=(1, 50))]
        )
        assert trace.violation is None
        assert trace.final.mappings["balances"] == {(1,): 70, (2,): 30}

    def test_unguarded_wrap_breaks_sum(self):
        ts = system(
            "mini_token_unguarded",
            ["13+ assert(sumMapping(balances) == totalSupply);"],
            cfg=DomainConfig(arith="wrap"),
        )
        trace = run(ts, (100,), [tx("transfer", sender=2, args=(1, 5))])
        assert trace.violation is not None

    def test_unguarded_revert_mode_is_safe(self):
        ts = system(
            "mini_token_unguarded",
            ["13+ assert(sumMapping(balances) == totalSupply);"],
        )
        trace = run(ts, (100,), [tx("transfer", sender=2, args=(1, 5))])
        assert trace.records[1].status == "reverted"
        assert trace.violation is None


# -- gas ----------------------------------------------------------------------


class TestGas:
    def test_costs_count_lowered_statements(self):
        ts = system("queued_vault")
        trace = run(ts, (), [tx("joinQueue", args=(5,))])
        assert trace.records[1].gas_used == 2

    def test_single_item_fits_cap_seven(self):
        ts = system("queued_vault", cfg=DomainConfig(gas_cap=7))
        trace = run(ts, (), [tx("joinQueue", args=(5,)), tx("processDeposits")])
        assert trace.records[2].status == "ok"
        assert trace.records[2].gas_used == 6

    def test_two_items_cross_cap_seven(self):
        ts = system("queued_vault", cfg=DomainConfig(gas_cap=7))
        trace = run(
            ts, (), [tx("joinQueue", args=(5,)), tx("joinQueue", args=(3,)), tx("processDeposits")]
        )
        assert trace.records[3].status == "gas"
        assert trace.violation == (GAS_CANDIDATE_KEY, 3)

    def test_queue_guard_blocks_before_gas(self):
        ts = system(
            "queued_vault",
            ['13+ require(queueLen == 1, "single deposit only");'],
            cfg=DomainConfig(gas_cap=7),
        )
        trace = run(
            ts, (), [tx("joinQueue", args=(5,)), tx("joinQueue", args=(3,)), tx("processDeposits")]
        )
        assert trace.records[3].status == "reverted"
        assert trace.violation is None

    def test_instrumented_checks_are_free(self):
        plain = system("queued_vault")
        checked = system("queued_vault", ["13+ assert(queueLen <= 1);"])
        seq = [tx("joinQueue", args=(5,)), tx("processDeposits")]
        assert (
            run(plain, (), seq).records[2].gas_used
            == run(checked, (), seq).records[2].gas_used
        )

    def test_loop_bound_reverts_past_unroll(self):
        ts = system("queued_vault")
        joins = [tx("joinQueue", args=(1,)) for _ in range(5)]
        trace = run(ts, (), joins + [tx("processDeposits")])
        assert trace.records[6].status == "reverted"
        assert "loop bound" in trace.records[6].detail


# -- trace mechanics ----------------------------------------------------------


class TestTraceMechanics:
    def test_revert_rolls_back_bit_identically(self):
        ts = system("mini_token")
        interp = Interp(ts)
        state, _ = interp.deploy((100,))
        before = state.digest()
        after, rec = interp.apply(state, tx("transfer", sender=2, args=(1, 200)))
        assert rec.status == "reverted"
        assert after.digest() == before

    def test_apply_never_mutates_its_input(self):
        ts = system("counter")
        interp = Interp(ts)
        state, _ = interp.deploy(())
        before = state.digest()
        interp.apply(state, tx("inc"))
        assert state.digest() == before

    def test_timestamp_advances_even_on_revert(self):
        ts = system("timelock_governor")
        interp = Interp(ts)
        state, _ = interp.deploy(())
        after, rec = interp.apply(state, tx("endExecute", sender=1, delta=9))
        assert rec.status == "reverted"
        assert after.timestamp == 9

    def test_transaction_json_round_trip(self):
        t = tx("transfer", sender=2, args=(1, 5), delta=3)
        assert Transaction.from_json(t.to_json()) == t

    def test_trace_json_shape(self):
        ts = system("counter", ["7+ Invariant(x <= 1);"])
        trace = run(ts, (), [tx("inc"), tx("inc")])
        blob = json.loads(json.dumps(trace.to_json()))
        assert blob["violation"]["record_index"] == 2
        assert blob["records"][0]["function"] == "constructor"
        assert blob["config"]["width"] == 8

    def test_written_zero_equals_never_written(self):
        a = ContractState(mappings={"m": {}})
        b = ContractState(mappings={"m": {(1,): 0}})
        assert a.digest() == b.digest()


# -- exhaustive search --------------------------------------------------------


class TestSearchViolation:
    def test_finds_shortest_counter_break(self):
        ts = system("counter", ["7+ Invariant(x <= 1);"], cfg=DomainConfig(width=4, addresses=2))
        trace = search_violation(ts, (), max_txs=4)
        assert trace is not None
        assert [r.tx.function for r in trace.records[1:]] == ["inc", "inc"]

    def test_respects_depth_bound(self):
        ts = system("counter", ["7+ Invariant(x <= 1);"], cfg=DomainConfig(width=4, addresses=2))
        assert search_violation(ts, (), max_txs=1) is None

    def test_none_when_contract_is_safe(self):
        ts = system("counter", ["7+ Invariant(x <= 100);"], cfg=DomainConfig(width=4, addresses=2))
        # x saturates the 4-bit space long before 100; reverts stop the walk
        assert search_violation(ts, (), max_txs=3) is None

    def test_transaction_space_is_canonical(self):
        ts = system("counter", cfg=DomainConfig(width=4, addresses=3))
        space = transaction_space(ts)
        assert space == [tx("inc", sender=1), tx("inc", sender=2)]
