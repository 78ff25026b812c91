"""Packet-level execution of the feedback delivery scheme.

Phases run in ascending target-set cardinality, sub-phases in
lexicographic order.  Sub-phase {k} broadcasts the raw uncached packets of
user k's file until somebody hears each one; larger sub-phases send fresh
random GF(2^8) combinations of every symbol still outstanding in the
pool.  After each slot the realized receiver set drives the bookkeeping:

  * a needing receiver banks the equation and its counter drops;
  * if an outsider overheard while some needing user missed the slot, the
    transmitted equation is promoted into the enlarged pool, moving those
    users' outstanding equations up with it;
  * otherwise the slot was wasted for the users that missed it and a
    fresh combination goes out next.

Decoding replays each user's banked equations through one Gaussian
elimination over symbol atoms (packets plus promoted combinations); rare
rank shortfalls from unlucky coefficients are repaired by a feedback
cleanup round.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterator

import numpy as np

from .gf256 import MUL, gf_dot, rref, append_reduced
from .model import Demand, SystemConfig, mask_of, subsets_ascending, users_of
from .placement import PlacementMap

SUPPORTED_FIELD_ORDERS = (2, 256)
CLEANUP_BUDGET_PER_USER = 64


class DeliveryError(Exception):
    pass


class CleanupBudgetExceeded(DeliveryError):
    """Decoding stayed rank-deficient after the cleanup slot budget."""


@dataclass
class SimResult:
    slots_total: int
    slots_per_subphase: dict[tuple[int, ...], int]
    decode_ok: list[bool] | None
    cleanup_slots: int
    realized_transfers: dict[tuple[tuple[int, ...], tuple[int, ...], int], int]
    seed: int
    unresolved: dict[int, list[int]] = field(default_factory=dict)
    recovered: dict[int, np.ndarray] | None = None

    def to_json(self) -> dict:
        key = lambda J: "[" + ",".join(str(u) for u in J) + "]"
        return {
            "slots_total": self.slots_total,
            "slots_per_subphase": {key(J): n
                                   for J, n in self.slots_per_subphase.items()},
            "decode_ok": self.decode_ok,
            "cleanup_slots": self.cleanup_slots,
            "seed": self.seed,
        }


@dataclass
class _Pool:
    atoms: list[int] = field(default_factory=list)
    needed: list[int] = field(default_factory=list)      # user bitmask
    payloads: list[np.ndarray] = field(default_factory=list)


class _Engine:
    def __init__(self, K: int, delta, seed: int, q: int = 256,
                 payload_len: int = 1, trace: list | None = None,
                 debug: bool = False,
                 state_source: Iterator[int] | None = None):
        if q not in SUPPORTED_FIELD_ORDERS:
            raise DeliveryError(f"field order {q} unsupported "
                                f"(choose from {SUPPORTED_FIELD_ORDERS})")
        self.K = K
        self.delta = np.asarray(delta, dtype=float)
        self.rng = np.random.default_rng(seed)
        self.q = q
        self.L = payload_len
        self.trace = trace
        self.debug = debug
        self.state_source = state_source
        self.full = (1 << K) - 1
        self.powers = (1 << np.arange(K)).astype(np.int64)
        self.pools: dict[int, _Pool] = {}
        self.npackets = 0
        self.values: np.ndarray | None = None           # (npackets, L)
        self.pmask: np.ndarray | None = None            # caching bitmask
        self.must_decode: list[np.ndarray] = [np.empty(0, np.int64)] * K
        # combo registry: atom -> (src pool mask, constituent atoms, coefs, payload)
        self.combos: dict[int, tuple[int, np.ndarray, np.ndarray, np.ndarray]] = {}
        self.next_atom = 0
        self.stored: list[dict[int, np.ndarray]] = [dict() for _ in range(K)]
        self.member_rows: list[list[int]] = [[] for _ in range(K)]
        self.slot = 0
        self.slots_per_subphase: dict[tuple[int, ...], int] = {}
        self.transfers: dict[tuple[tuple[int, ...], tuple[int, ...], int], int] = {}
        self._expansion: dict[int, dict[int, int]] = {}

    # -- setup -------------------------------------------------------------

    def set_packets(self, npackets: int, pmask: np.ndarray) -> None:
        self.npackets = npackets
        self.next_atom = npackets
        self.values = self.rng.integers(0, 256, (npackets, self.L), dtype=np.uint8)
        self.pmask = pmask.astype(np.int64)

    def seed_item(self, pool_mask: int, atom: int, needed_mask: int,
                  payload: np.ndarray) -> None:
        pool = self.pools.setdefault(pool_mask, _Pool())
        pool.atoms.append(atom)
        pool.needed.append(needed_mask)
        pool.payloads.append(payload)

    # -- channel -----------------------------------------------------------

    def _state(self) -> int:
        if self.state_source is not None:
            return next(self.state_source)
        return int(((self.rng.random(self.K) < (1.0 - self.delta))
                    @ self.powers))

    def _coefs(self, n: int) -> np.ndarray:
        return self.rng.integers(0, self.q, n, dtype=np.uint8)

    def _trace(self, pool_mask: int, S: int, action: str) -> None:
        if self.trace is not None:
            self.trace.append((self.slot,
                               "|".join(map(str, users_of(pool_mask))),
                               "|".join(map(str, users_of(S))), action))

    # -- main loop ----------------------------------------------------------

    def run(self, start_phase: int = 1) -> None:
        for pool_mask in subsets_ascending(self.K):
            if bin(pool_mask).count("1") < start_phase:
                continue
            pool = self.pools.get(pool_mask)
            if pool is None or not pool.atoms:
                continue
            before = self.slot
            if bin(pool_mask).count("1") == 1:
                self._run_raw(pool_mask, pool)
            else:
                self._run_multicast(pool_mask, pool)
            self.slots_per_subphase[users_of(pool_mask)] = self.slot - before

    def _record_transfer(self, src: int, dst: int, needed_mask: int) -> None:
        key_src, key_dst = users_of(src), users_of(dst)
        for k0 in range(self.K):
            if needed_mask >> k0 & 1:
                key = (key_src, key_dst, k0 + 1)
                self.transfers[key] = self.transfers.get(key, 0) + 1

    def _run_raw(self, pool_mask: int, pool: _Pool) -> None:
        """Broadcast each raw packet until at least one user receives it."""
        k0 = pool_mask.bit_length() - 1
        for atom, payload in zip(pool.atoms, pool.payloads):
            while True:
                self.slot += 1
                S = self._state()
                if S == 0:
                    self._trace(pool_mask, S, "waste")
                    continue
                for u in range(self.K):
                    if S >> u & 1:
                        self.stored[u][atom] = payload
                if S >> k0 & 1:
                    self._trace(pool_mask, S, "deliver")
                else:
                    target = pool_mask | S
                    self.seed_item(target, atom, 1 << k0, payload)
                    self._record_transfer(pool_mask, target, 1 << k0)
                    self._trace(pool_mask, S, "promote")
                break

    def _run_multicast(self, pool_mask: int, pool: _Pool) -> None:
        atoms = np.asarray(pool.atoms, dtype=np.int64)
        needed = np.asarray(pool.needed, dtype=np.int64)
        payloads = np.stack(pool.payloads)
        r = np.zeros(self.K, dtype=np.int64)
        for k0 in range(self.K):
            r[k0] = int(np.count_nonzero(needed >> k0 & 1))
        active = 0
        for k0 in range(self.K):
            if r[k0] > 0:
                active |= 1 << k0
        act_idx = np.nonzero(needed & active)[0]
        while active:
            self.slot += 1
            coefs = self._coefs(len(act_idx))
            payload = gf_dot(coefs, payloads[act_idx])
            S = self._state()
            got = S & active
            moved = (active & ~S) if (S & ~pool_mask) else 0
            atom = -1
            if S or moved:
                atom = self.next_atom
                self.next_atom += 1
                self.combos[atom] = (pool_mask, atoms[act_idx].copy(),
                                     coefs, payload)
                if self.debug:
                    self._check_payload(atom)
                for u in range(self.K):
                    if S >> u & 1:
                        self.stored[u][atom] = payload
                        if pool_mask >> u & 1:
                            self.member_rows[u].append(atom)
            for k0 in range(self.K):
                if got >> k0 & 1:
                    r[k0] -= 1
            if moved:
                target = pool_mask | S
                self.seed_item(target, atom, moved, payload)
                self._record_transfer(pool_mask, target, moved)
                for k0 in range(self.K):
                    if moved >> k0 & 1:
                        r[k0] -= 1
            if got:
                self._trace(pool_mask, S, "deliver")
            elif moved:
                self._trace(pool_mask, S, "promote")
            else:
                self._trace(pool_mask, S, "waste")
            finished = 0
            for k0 in range(self.K):
                if active >> k0 & 1 and r[k0] == 0:
                    finished |= 1 << k0
            if finished:
                active &= ~finished
                act_idx = np.nonzero(needed & active)[0]

    # -- debug -------------------------------------------------------------

    def _expand(self, atom: int) -> dict[int, int]:
        """Packet-space coefficient vector of an atom (debug only)."""
        if atom < self.npackets:
            return {atom: 1}
        if atom in self._expansion:
            return self._expansion[atom]
        _, atom_ids, coefs, _ = self.combos[atom]
        out: dict[int, int] = {}
        for a, c in zip(atom_ids.tolist(), coefs.tolist()):
            if c == 0:
                continue
            for pid, cc in self._expand(a).items():
                v = out.get(pid, 0) ^ int(MUL[c, cc])
                if v:
                    out[pid] = v
                else:
                    out.pop(pid)
        self._expansion[atom] = out
        return out

    def _check_payload(self, atom: int) -> None:
        expected = np.zeros(self.L, dtype=np.uint8)
        for pid, c in self._expand(atom).items():
            expected ^= MUL[c, self.values[pid]]
        if not np.array_equal(expected, self.combos[atom][3]):
            raise DeliveryError("payload identity violated (engine bug)")

    # -- decoding ----------------------------------------------------------

    def decode_user(self, k: int):
        """Solve user k's banked equations.

        Returns (solved {packet id: value row}, unresolved demanded ids,
        mutable rref state for cleanup continuation).
        """
        k0 = k - 1
        bit = 1 << k0
        stored = self.stored[k0]
        known_packet = (self.pmask & bit) != 0
        for a in stored:
            if a < self.npackets:
                known_packet[a] = True
        packet_col = np.full(self.npackets, -1, dtype=np.int64)
        combo_col: dict[int, int] = {}
        ncols = 0
        rows: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []
        pending: list[int] = []

        def resolve(atom_ids, coef_arr):
            """Split one combination into unknown columns and a valued
            right-hand-side contribution."""
            nonlocal ncols
            live = coef_arr != 0
            ids, cs = atom_ids[live], coef_arr[live]
            is_pkt = ids < self.npackets
            pid, pc = ids[is_pkt], cs[is_pkt]
            have = known_packet[pid]
            rhs = gf_dot(pc[have], self.values[pid[have]])
            upid, upc = pid[~have], pc[~have]
            fresh = np.unique(upid[packet_col[upid] < 0])
            if len(fresh):
                packet_col[fresh] = np.arange(ncols, ncols + len(fresh))
                ncols += len(fresh)
            cols = [packet_col[upid]]
            coefs = [upc]
            extra_col, extra_c = [], []
            for a, c in zip(ids[~is_pkt].tolist(), cs[~is_pkt].tolist()):
                if a in stored:
                    rhs = rhs ^ MUL[c, stored[a]]
                else:
                    col = combo_col.get(a)
                    if col is None:
                        col = combo_col[a] = ncols
                        ncols += 1
                        pending.append(a)
                    extra_col.append(col)
                    extra_c.append(c)
            if extra_col:
                cols.append(np.asarray(extra_col, dtype=np.int64))
                coefs.append(np.asarray(extra_c, dtype=np.uint8))
            return (np.concatenate(cols), np.concatenate(coefs),
                    np.atleast_1d(rhs))

        for atom in self.member_rows[k0]:
            _, atom_ids, coefs, payload = self.combos[atom]
            cols, cs, rhs = resolve(atom_ids, coefs)
            rows.append((cols, cs, rhs ^ payload))
        while pending:
            a = pending.pop()
            _, atom_ids, coefs, payload = self.combos[a]
            cols, cs, rhs = resolve(atom_ids, coefs)
            cols = np.append(cols, combo_col[a])
            cs = np.append(cs, np.uint8(1))
            rows.append((cols, cs, rhs))

        m = np.zeros((len(rows), ncols + self.L), dtype=np.uint8)
        for i, (cols, cs, rhs) in enumerate(rows):
            m[i, cols] = cs
            m[i, ncols:] = rhs
        pivots = rref(m, ncols)
        col_of: dict[int, int] = {
            pid: int(packet_col[pid])
            for pid in np.nonzero(packet_col >= 0)[0].tolist()}
        col_of.update(combo_col)
        state = [m, pivots, col_of]
        solved, unresolved = self._extract(k, state)
        return solved, unresolved, state

    def _extract(self, k: int, state):
        m, pivots, col_of = state
        n = len(col_of)
        bit = 1 << (k - 1)
        solved: dict[int, np.ndarray] = {}
        id_of = {c: a for a, c in col_of.items()}
        for c, rw in pivots.items():
            if np.count_nonzero(m[rw, :n]) == 1 and id_of[c] < self.npackets:
                solved[id_of[c]] = m[rw, n:]
        unresolved = []
        for pid in self.must_decode[k - 1].tolist():
            if self.pmask[pid] & bit or pid in self.stored[k - 1]:
                continue
            if pid not in solved:
                unresolved.append(pid)
        return solved, unresolved

    def recovered_file(self, k: int, file_ids: np.ndarray,
                       solved: dict[int, np.ndarray]) -> np.ndarray | None:
        """Reassemble the demanded packets byte-exactly, or None."""
        bit = 1 << (k - 1)
        out = np.zeros((len(file_ids), self.L), dtype=np.uint8)
        for i, pid in enumerate(file_ids.tolist()):
            if self.pmask[pid] & bit:
                out[i] = self.values[pid]
            elif pid in self.stored[k - 1]:
                out[i] = self.stored[k - 1][pid]
            elif pid in solved:
                out[i] = solved[pid]
            else:
                return None
        return out

    def _ensure_columns(self, state, ids) -> None:
        """Widen the system with all-zero columns for packets that never
        appeared in any banked equation (possible at small field orders)."""
        m, _, col_of = state
        missing = [pid for pid in ids if pid not in col_of]
        if not missing:
            return
        n = len(col_of)
        state[0] = np.concatenate(
            [m[:, :n], np.zeros((m.shape[0], len(missing)), np.uint8),
             m[:, n:]], axis=1)
        for pid in missing:
            col_of[pid] = n
            n += 1

    def cleanup(self, k: int, state, budget: int) -> tuple[int, list[int]]:
        """Feedback retransmission of fresh combinations over the still
        unresolved packets until user k can finish, within `budget` slots."""
        k0 = k - 1
        used = 0
        _, unresolved = self._extract(k, state)
        self._ensure_columns(state, unresolved)
        while unresolved:
            if used >= budget:
                return used, unresolved
            used += 1
            self.slot += 1
            ids = np.asarray(unresolved, dtype=np.int64)
            coefs = self._coefs(len(ids))
            payload = gf_dot(coefs, self.values[ids])
            S = self._state()
            if not S >> k0 & 1:
                continue
            m, pivots, col_of = state
            n = len(col_of)
            row = np.zeros(n + self.L, dtype=np.uint8)
            for pid, c in zip(unresolved, coefs.tolist()):
                row[col_of[pid]] ^= c
            row[n:] = payload
            state[0], _ = append_reduced(m, pivots, row, n)
            _, unresolved = self._extract(k, state)
        return used, []

    def final_solved(self, k: int, state) -> dict[int, np.ndarray]:
        solved, _ = self._extract(k, state)
        return solved


def _file_offsets(cfg: SystemConfig) -> np.ndarray:
    return np.concatenate([[0], np.cumsum(cfg.file_sizes)]).astype(np.int64)


def run_delivery(cfg: SystemConfig, pm: PlacementMap, demand: Demand | None = None,
                 seed: int = 0, start_phase: int = 1, decode: bool = True,
                 payload_len: int = 1, cleanup_budget: int | None = None,
                 trace: list | None = None, debug: bool = False,
                 state_source: Iterator[int] | None = None) -> SimResult:
    """Execute phases start_phase..K for the given placement and demand.

    Returns slot counts per sub-phase, realized promotion counts, and
    (when `decode` is set) per-user byte-exact decoding results; a rank
    shortfall triggers feedback cleanup, and exhausting the cleanup budget
    raises CleanupBudgetExceeded.
    """
    demand = demand or Demand.identity(cfg.K)
    if len(set(demand.assignment)) != cfg.K:
        raise DeliveryError("demands must be distinct")
    if not 1 <= start_phase <= cfg.K:
        raise DeliveryError("start_phase out of range")
    eng = _Engine(cfg.K, cfg.delta, seed, q=cfg.field_order,
                  payload_len=payload_len, trace=trace, debug=debug,
                  state_source=state_source)
    off = _file_offsets(cfg)
    pmask = np.concatenate([m.astype(np.int64) for m in pm.cache_masks])
    eng.set_packets(int(off[-1]), pmask)
    for k in range(1, cfg.K + 1):
        k0 = k - 1
        fi = demand.file_of(k) - 1
        ids = np.arange(off[fi], off[fi + 1])
        eng.must_decode[k0] = ids
        masks = pmask[off[fi]:off[fi + 1]]
        for pid, mce in zip(ids.tolist(), masks.tolist()):
            if mce >> k0 & 1:
                continue
            eng.seed_item(int(mce) | (1 << k0), pid, 1 << k0,
                          eng.values[pid])
    eng.run(start_phase=start_phase)
    return _finish(cfg, eng, demand, seed, decode, cleanup_budget, off)


def run_order_start(K: int, delta, order: int, n_packets: int, seed: int = 0,
                    decode: bool = False, q: int = 256, payload_len: int = 1,
                    cleanup_budget: int | None = None) -> SimResult:
    """Enter the multicast pipeline at the given phase: every subset of
    that size is seeded with fresh packets wanted by all its members."""
    if not 1 <= order <= K:
        raise DeliveryError("order out of range")
    eng = _Engine(K, delta, seed, q=q, payload_len=payload_len)
    groups = list(combinations(range(1, K + 1), order))
    npackets = n_packets * len(groups)
    eng.set_packets(npackets, np.zeros(npackets, dtype=np.int64))
    want: list[list[int]] = [[] for _ in range(K)]
    pid = 0
    for g in groups:
        gm = mask_of(g)
        for _ in range(n_packets):
            eng.seed_item(gm, pid, gm, eng.values[pid])
            for k in g:
                want[k - 1].append(pid)
            pid += 1
    for k0 in range(K):
        eng.must_decode[k0] = np.asarray(want[k0], dtype=np.int64)
    eng.run(start_phase=order)
    cfg = SystemConfig(K=K, N=K, delta=tuple(delta), mem=(0.0,) * K,
                       file_sizes=(1,) * K, field_order=q)
    return _finish(cfg, eng, None, seed, decode, cleanup_budget, None)


def _finish(cfg: SystemConfig, eng: _Engine, demand: Demand | None, seed: int,
            decode: bool, cleanup_budget: int | None,
            off: np.ndarray | None) -> SimResult:
    cleanup_slots = 0
    decode_ok = None
    recovered: dict[int, np.ndarray] | None = None
    unresolved_all: dict[int, list[int]] = {}
    if decode:
        budget = (CLEANUP_BUDGET_PER_USER * cfg.K if cleanup_budget is None
                  else cleanup_budget)
        decode_ok = []
        recovered = {}
        for k in range(1, cfg.K + 1):
            solved, unresolved, state = eng.decode_user(k)
            if unresolved:
                used, unresolved = eng.cleanup(k, state, budget - cleanup_slots)
                cleanup_slots += used
                solved = eng.final_solved(k, state)
            if unresolved:
                unresolved_all[k] = unresolved
                err = CleanupBudgetExceeded(
                    f"user {k} still missing {len(unresolved)} packets "
                    f"after {cleanup_slots} cleanup slots")
                err.unresolved = unresolved_all
                raise err
            got = eng.recovered_file(k, eng.must_decode[k - 1], solved)
            ok = got is not None and np.array_equal(
                got, eng.values[eng.must_decode[k - 1]])
            decode_ok.append(bool(ok))
            if not ok:
                raise DeliveryError(f"user {k} produced wrong bytes (engine bug)")
            recovered[k] = got
    return SimResult(
        slots_total=eng.slot,
        slots_per_subphase=eng.slots_per_subphase,
        decode_ok=decode_ok,
        cleanup_slots=cleanup_slots,
        realized_transfers=eng.transfers,
        seed=seed,
        unresolved=unresolved_all,
        recovered=recovered,
    )
