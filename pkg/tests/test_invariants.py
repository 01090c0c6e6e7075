"""Candidate parsing and instrumentation."""

from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import fixture_text
from minisol import invariants as inv
from minisol.errors import AnchorMismatch, DuplicateInstrumentation
from minisol.invariants import (
    CandidateKind,
    CheckStmt,
    FracConst,
    GuardStmt,
    InvariantCandidate,
    Placement,
    ProgramPoint,
    SnapshotRef,
    SyntaxReject,
    instrument,
    mod_set,
    parse_candidate,
    parse_candidates,
    scope_locals,
    transaction_writes,
)
from minisol.lang import ast, load_contract
from minisol.lang.typecheck import iter_stmts


def contract(name):
    return load_contract(fixture_text(f"{name}.msol"), path=f"{name}.msol")


@pytest.fixture(scope="module")
def ledger():
    return contract("token_ledger")


@pytest.fixture(scope="module")
def vault():
    return contract("priced_vault")


@pytest.fixture(scope="module")
def timelock():
    return contract("timelock_governor")


# -- program points ---------------------------------------------------------


class TestProgramPoint:
    def test_parse_at(self):
        p = ProgramPoint.parse("15")
        assert p == ProgramPoint(15, Placement.AT_LINE)
        assert p.render() == "15"

    def test_parse_after(self):
        p = ProgramPoint.parse("15+")
        assert p == ProgramPoint(15, Placement.AFTER_LINE)
        assert p.render() == "15+"
        assert p.after

    @pytest.mark.parametrize("bad", ["", "+", "0", "-3", "12++", "a5", "5a"])
    def test_rejects_garbage(self, bad):
        from minisol.errors import CandidateSyntaxError

        with pytest.raises(CandidateSyntaxError):
            ProgramPoint.parse(bad)

    @given(st.integers(min_value=1, max_value=10_000), st.booleans())
    def test_render_parse_round_trip(self, line, after):
        p = ProgramPoint(line, Placement.AFTER_LINE if after else Placement.AT_LINE)
        assert ProgramPoint.parse(p.render()) == p

    def test_ordering_groups_by_line(self):
        pts = [ProgramPoint.parse(s) for s in ["8+", "7", "7+", "8"]]
        assert [p.render() for p in sorted(pts)] == ["7", "7+", "8", "8+"]


# -- parsing the template forms ---------------------------------------------


class TestParseCandidate:
    def test_assertion(self, ledger):
        c = parse_candidate("7+ assert(balances[msg.sender] >= tokens);", ledger)
        assert isinstance(c, InvariantCandidate)
        assert c.kind is CandidateKind.ASSERTION
        assert c.anchor.render() == "7+"
        assert isinstance(c.expr, ast.BinOp)

    def test_sum_mapping_normalized(self, ledger):
        c = parse_candidate("8+ assert(sumMapping(balances) == totalSupply);", ledger)
        assert any(isinstance(n, ast.SumMapping) for n in inv.walk_expr(c.expr))

    def test_old_and_k_normalized(self, vault):
        c = parse_candidate("15+ assert(price <= Old(price) * k);", vault)
        nodes = list(inv.walk_expr(c.expr))
        assert any(isinstance(n, ast.OldExpr) for n in nodes)
        assert any(isinstance(n, ast.KConst) for n in nodes)
        assert c.k == Fraction(2)

    def test_k_override(self, vault):
        c = parse_candidate("15+ assert(price <= Old(price) * k);", vault, k=Fraction(200))
        assert c.k == Fraction(200)

    def test_require_with_message(self):
        ir = contract("queued_vault")
        c = parse_candidate('13+ require(queueLen == 1, "single deposit only");', ir)
        assert c.kind is CandidateKind.REQUIRE
        assert c.message == "single deposit only"

    def test_global_invariant_with_call_term(self, ledger):
        c = parse_candidate("17+ Invariant(tokenIncrease() > 100);", ledger)
        assert c.kind is CandidateKind.GLOBAL_INVARIANT
        assert any(isinstance(n, ast.CallExpr) for n in inv.walk_expr(c.expr))

    def test_modifier_definition(self, ledger):
        c = parse_candidate("10+ modifier onlyOwner{require(msg.sender==owner);};", ledger)
        assert c.kind is CandidateKind.MODIFIER
        assert c.modifier_name == "onlyOwner"
        assert isinstance(c.modifier_cond, ast.BinOp)

    def test_parameter_in_scope(self, timelock):
        c = parse_candidate(
            "19+ assert(votingToken.balanceOf(address(this)) == "
            "Old(votingToken.balanceOf(address(this))) + amount);",
            timelock,
        )
        assert isinstance(c, InvariantCandidate)

    def test_key_is_stable_identity(self, ledger):
        a = parse_candidate("7+ assert(balances[msg.sender] >= tokens);", ledger)
        b = parse_candidate("7+  assert(balances[msg.sender]  >= tokens);", ledger)
        assert a.key == b.key


class TestSyntaxRejects:
    def test_missing_anchor(self, ledger):
        r = parse_candidate("assert(tokens >= 0);", ledger)
        assert isinstance(r, SyntaxReject)
        assert "anchor" in r.reason

    def test_anchor_out_of_range(self, ledger):
        r = parse_candidate("999+ assert(tokens >= 0);", ledger)
        assert isinstance(r, SyntaxReject)

    def test_unknown_identifier(self, ledger):
        r = parse_candidate("7+ assert(reserves >= 0);", ledger)
        assert isinstance(r, SyntaxReject)
        assert "type-check" in r.reason

    def test_non_boolean_body(self, ledger):
        r = parse_candidate("7+ assert(tokens + 1);", ledger)
        assert isinstance(r, SyntaxReject)

    def test_unrecognized_form(self, ledger):
        r = parse_candidate("7+ ensure tokens >= 0;", ledger)
        assert isinstance(r, SyntaxReject)
        assert r.reason == "unrecognized template form"

    def test_old_outside_assert(self, ledger):
        r = parse_candidate("7+ require(tokens == Old(tokens));", ledger)
        assert isinstance(r, SyntaxReject)
        assert "Old" in r.reason

    def test_call_term_outside_invariant(self, ledger):
        r = parse_candidate("7+ assert(tokenIncrease() > 0);", ledger)
        assert isinstance(r, SyntaxReject)

    def test_attach_unknown_modifier(self, ledger):
        r = parse_candidate("12 function tokenIncrease() onlyOwner external {...};", ledger)
        assert isinstance(r, SyntaxReject)
        assert "onlyOwner" in r.reason

    def test_attach_unknown_function(self, ledger):
        r = parse_candidate("12 function burn() onlyOwner external {...};", ledger)
        assert isinstance(r, SyntaxReject)

    def test_mangled_expression(self, ledger):
        r = parse_candidate("7+ assert(tokens >=);", ledger)
        assert isinstance(r, SyntaxReject)
        assert "expression" in r.reason


class TestBatchParsing:
    def test_attachment_sees_sibling_definition(self, ledger):
        batch = parse_candidates(
            [
                ("10+ modifier onlyOwner{require(msg.sender==owner);};", None),
                ("12 function tokenIncrease() onlyOwner external {...};", None),
            ],
            ledger,
        )
        definition, attach = batch
        assert isinstance(attach, InvariantCandidate)
        assert attach.attach_function == "tokenIncrease"
        assert attach.attach_modifiers == ("onlyOwner",)
        assert attach.paired_defs == (definition,)

    def test_table_batch_all_parse(self, ledger):
        import json

        entries = [(f"{e['anchor']} {e['text']}", None)
                   for e in json.loads(fixture_text("token_ledger.inv.json"))]
        batch = parse_candidates(entries, ledger)
        assert all(isinstance(c, InvariantCandidate) for c in batch)
        kinds = [c.kind for c in batch]
        assert kinds == [
            CandidateKind.ASSERTION,
            CandidateKind.ASSERTION,
            CandidateKind.MODIFIER,
            CandidateKind.MODIFIER,
            CandidateKind.GLOBAL_INVARIANT,
        ]


# -- instrumentation --------------------------------------------------------


def stmts_of(ir, fname):
    return list(iter_stmts(ir.function(fname).body))


class TestInstrument:
    def test_assert_after_statement(self, ledger):
        c = parse_candidate("7+ assert(balances[msg.sender] >= tokens);", ledger)
        out = instrument(ledger, c)
        body = out.function("transfer").body
        assert isinstance(body[1], CheckStmt)
        assert body[1].line == 7
        assert body[1].check.candidate_key == c.key
        # the original is untouched
        assert not any(isinstance(s, CheckStmt) for s in stmts_of(ledger, "transfer"))

    def test_assert_at_statement_goes_before(self, ledger):
        c = parse_candidate("8 assert(balances[msg.sender] >= tokens);", ledger)
        out = instrument(ledger, c)
        body = out.function("transfer").body
        assert isinstance(body[1], CheckStmt)
        assert isinstance(body[2], ast.Assign)

    def test_require_becomes_guard(self):
        ir = contract("queued_vault")
        c = parse_candidate('13+ require(queueLen == 1, "single deposit only");', ir)
        out = instrument(ir, c)
        body = out.function("processDeposits").body
        assert isinstance(body[0], ast.LocalDecl)
        assert isinstance(body[1], GuardStmt)
        assert body[1].message == "single deposit only"
        assert isinstance(body[2], ast.While)

    def test_k_resolved_to_fraction(self, vault):
        c = parse_candidate("15+ assert(price <= Old(price) * k);", vault, k=Fraction(200))
        out = instrument(vault, c)
        check = [s for s in stmts_of(out, "deposit") if isinstance(s, CheckStmt)][0]
        fracs = [n for n in inv.walk_expr(check.check.expr) if isinstance(n, FracConst)]
        assert fracs == [FracConst(Fraction(200))]

    def test_old_becomes_snapshot_cell(self, vault):
        c = parse_candidate("15+ assert(price <= Old(price) * k);", vault)
        out = instrument(vault, c)
        assert len(out.snapshots) == 1
        spec = out.snapshots[0]
        assert spec.expr == ast.Name("price")
        check = [s for s in stmts_of(out, "deposit") if isinstance(s, CheckStmt)][0]
        refs = [n for n in inv.walk_expr(check.check.expr) if isinstance(n, SnapshotRef)]
        assert refs == [SnapshotRef(spec.cell)]

    def test_snapshot_recapture_set_tracks_writers(self, vault):
        # price is written only via deposit's internal repricing call, so
        # token-stub transfers must not refresh the snapshot
        c = parse_candidate("15+ assert(price <= Old(price) * k);", vault)
        out = instrument(vault, c)
        assert out.snapshots[0].recapture == frozenset({"deposit"})

    def test_snapshot_recapture_includes_token_moves(self, timelock):
        c = parse_candidate(
            "19+ assert(votingToken.balanceOf(address(this)) == "
            "Old(votingToken.balanceOf(address(this))) + amount);",
            timelock,
        )
        out = instrument(timelock, c)
        assert out.snapshots[0].recapture == frozenset(
            {"execute", "votingToken.transfer", "votingToken.transferFrom"}
        )

    def test_global_invariant_registered(self, ledger):
        c = parse_candidate("17+ Invariant(tokenIncrease() > 100);", ledger)
        out = instrument(ledger, c)
        assert len(out.global_checks) == 1
        assert out.global_checks[0].kind == "invariant"

    def test_modifier_pair(self, ledger):
        batch = parse_candidates(
            [
                ("10+ modifier onlyOwner{require(msg.sender==owner);};", None),
                ("12 function tokenIncrease() onlyOwner external {...};", None),
            ],
            ledger,
        )
        out = instrument(ledger, batch[1])  # attach pulls in its definition
        assert out.modifier("onlyOwner") is not None
        assert out.function("tokenIncrease").modifiers == ["onlyOwner"]
        assert ledger.modifier("onlyOwner") is None

    def test_modifier_definition_alone(self, ledger):
        c = parse_candidate("10+ modifier onlyOwner{require(msg.sender==owner);};", ledger)
        out = instrument(ledger, c)
        assert out.modifier("onlyOwner") is not None
        assert out.function("tokenIncrease").modifiers == []

    def test_duplicate_instrumentation_raises(self, ledger):
        c = parse_candidate("7+ assert(balances[msg.sender] >= tokens);", ledger)
        once = instrument(ledger, c)
        with pytest.raises(DuplicateInstrumentation):
            instrument(once, c)

    def test_assume_guards_function_entry(self, timelock):
        c = parse_candidate("17 Assume(amount <= 50);", timelock)
        out = instrument(timelock, c)
        body = out.function("execute").body
        assert isinstance(body[0], GuardStmt)

    def test_ensures_checks_every_exit(self, ledger):
        c = parse_candidate("12 Ensures(tokens <= 110);", ledger)
        out = instrument(ledger, c)
        body = out.function("tokenIncrease").body
        # one before the return, none dangling after it
        returns = [i for i, s in enumerate(body) if isinstance(s, ast.Return)]
        assert returns and isinstance(body[returns[0] - 1], CheckStmt)

    def test_ensures_on_fallthrough_body(self, ledger):
        c = parse_candidate("6 Ensures(tokens >= 0);", ledger)
        out = instrument(ledger, c)
        assert isinstance(out.function("transfer").body[-1], CheckStmt)


class TestAnchorMismatch:
    def test_assert_on_blank_line(self, ledger):
        c = parse_candidate("10+ assert(tokens >= 0);", ledger)
        with pytest.raises(AnchorMismatch):
            instrument(ledger, c)

    def test_assert_on_signature(self, ledger):
        c = parse_candidate("12 assert(tokens >= 0);", ledger)
        with pytest.raises(AnchorMismatch):
            instrument(ledger, c)

    def test_invariant_inside_body(self, ledger):
        c = parse_candidate("7 Invariant(tokens >= 0);", ledger)
        with pytest.raises(AnchorMismatch):
            instrument(ledger, c)

    def test_invariant_at_loop_head_is_legal(self):
        ir = contract("queued_vault")
        c = parse_candidate("14 Invariant(processedTotal <= 8);", ir)
        out = instrument(ir, c)
        body = out.function("processDeposits").body
        loop = [s for s in body if isinstance(s, ast.While)][0]
        assert isinstance(body[1], CheckStmt)  # before entry
        assert isinstance(loop.body[-1], CheckStmt)  # after each iteration
        assert body[1].check.kind == "loop-invariant"

    def test_modifier_def_on_statement_line(self, ledger):
        c = parse_candidate("7+ modifier onlyOwner{require(msg.sender==owner);};", ledger)
        with pytest.raises(AnchorMismatch):
            instrument(ledger, c)

    def test_attach_on_wrong_line(self, ledger):
        batch = parse_candidates(
            [
                ("10+ modifier onlyOwner{require(msg.sender==owner);};", None),
                ("6 function tokenIncrease() onlyOwner external {...};", None),
            ],
            ledger,
        )
        with pytest.raises(AnchorMismatch):
            instrument(ledger, batch[1])

    def test_assume_needs_signature(self, timelock):
        c = parse_candidate("18 Assume(amount <= 50);", timelock)
        with pytest.raises(AnchorMismatch):
            instrument(timelock, c)


# -- dataflow helpers --------------------------------------------------------


class TestModSets:
    def test_transfer_writes_mapping_only(self, ledger):
        assert mod_set(ledger, "transfer") == frozenset({"balances"})

    def test_token_increase_writes_scalar(self, ledger):
        assert mod_set(ledger, "tokenIncrease") == frozenset({"tokens"})

    def test_internal_calls_are_transitive(self, vault):
        assert "price" in mod_set(vault, "deposit")
        assert "sharesOf" in mod_set(vault, "deposit")

    def test_token_calls_write_the_token(self, timelock):
        assert mod_set(timelock, "execute") == frozenset({"votingToken"})

    def test_transaction_writes_covers_stub_moves(self, timelock):
        writes = transaction_writes(timelock)
        assert writes["votingToken.transfer"] == frozenset({"votingToken"})
        assert set(writes) == {
            "startExecute",
            "execute",
            "endExecute",
            "votingToken.transfer",
            "votingToken.transferFrom",
        }

    def test_locals_are_not_state_cells(self):
        ir = contract("queued_vault")
        assert mod_set(ir, "processDeposits") == frozenset({"queueLen", "processedTotal"})


class TestScopeLocals:
    def test_inside_function_sees_params(self, timelock):
        env = scope_locals(timelock, ProgramPoint.parse("19+"))
        assert env == {"amount": ast.Ty.UINT}

    def test_contract_scope_sees_nothing(self, ledger):
        assert scope_locals(ledger, ProgramPoint.parse("17+")) == {}

    def test_locals_visible_after_declaration(self, vault):
        env = scope_locals(vault, ProgramPoint.parse("17+"))
        assert "deposit0PricedInToken1" in env
        env_before = scope_locals(vault, ProgramPoint.parse("15"))
        assert "deposit0PricedInToken1" not in env_before
