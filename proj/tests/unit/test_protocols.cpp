#include "support.hpp"

#include "dpsim/baton.hpp"
#include "dpsim/chord.hpp"
#include "dpsim/dummy.hpp"

#include <catch_amalgamated.hpp>

#include <map>

using namespace dpsim;
using namespace testing;

namespace
{
    ProtocolSpec chord(unsigned bits) { return {"chord", 2, bits}; }
    ProtocolSpec baton(unsigned m, unsigned bits = 32) { return {"baton_star", m, bits}; }

    std::vector<NodeId> full_ring(unsigned bits)
    {
        std::vector<NodeId> ids;
        for (std::uint64_t v = 0; v < key_space(bits); ++v)
            ids.emplace_back(v);
        return ids;
    }

    // Reference greedy finger routing: farthest finger not past the key.
    std::vector<std::uint64_t> oracle_chord_path(const std::set<std::uint64_t> &ring, unsigned bits,
                                                 std::uint64_t from, std::uint64_t key)
    {
        const std::uint64_t size = std::uint64_t{1} << bits;
        auto succ = [&](std::uint64_t k) {
            auto it = ring.lower_bound(k % size);
            return it == ring.end() ? *ring.begin() : *it;
        };
        auto dist = [&](std::uint64_t a, std::uint64_t b) { return (b + size - a) % size; };
        std::vector<std::uint64_t> path{from};
        std::uint64_t n = from;
        while (succ(key) != n)
        {
            const std::uint64_t s = succ(n + 1);
            if (dist(n, key) <= dist(n, s) && key != n)
            {
                path.push_back(s);
                break;
            }
            std::uint64_t next = s;
            for (unsigned i = bits; i-- > 0;)
            {
                const std::uint64_t f = succ(n + (std::uint64_t{1} << i));
                if (f != n && dist(n, f) <= dist(n, key))
                {
                    next = f;
                    break;
                }
            }
            path.push_back(next);
            n = next;
        }
        return path;
    }
} // namespace

TEST_CASE("chord routing table on the full 8-ring", "[chord]")
{
    auto c = build(chord(3), full_ring(3));
    auto t = c->view().protocol().routing_table(c->view(), NodeId{0});
    std::set<std::uint64_t> got;
    for (auto n : t.neighbors())
        got.insert(n.value);
    CHECK(got == std::set<std::uint64_t>{1, 2, 4, 7});
    CHECK(t.size() <= t.capacity);
}

TEST_CASE("chord lookup from 0 to key 7 follows 0-4-6-7", "[chord]")
{
    auto c = build(chord(3), full_ring(3));
    auto r = run_op(*c, MessageKind::SEARCH, NodeId{0}, 7);
    CHECK(r.status == OpStatus::Ok);
    CHECK(r.path == ids_of({0, 4, 6, 7}));
    CHECK(r.hops == 3);
    CHECK(r.owner == NodeId{7});
}

TEST_CASE("chord join of 5 into {0,2,4,6}", "[chord]")
{
    auto c = build(chord(3), ids_of({0, 2, 4, 6}));
    join_node(*c, NodeId{5}, NodeId{0});
    settle(*c, 100);
    const auto &ring = dynamic_cast<const Chord &>(c->view().protocol());
    CHECK(ring.successor(NodeId{5}) == NodeId{6});
    CHECK(ring.predecessor(NodeId{5}) == NodeId{4});
    auto s = c->engine().stats().summary("join_hops");
    CHECK(s.max <= 3);
    CHECK(c->view().log_count(MessageKind::JOIN_RESP) == 4);
}

TEST_CASE("chord lookups agree with the greedy oracle on random rings", "[chord]")
{
    const unsigned bits = 10;
    auto ids = random_ids(200, bits, 3);
    auto c = build(chord(bits), ids);
    std::set<std::uint64_t> ring;
    for (auto id : ids)
        ring.insert(id.value);
    Rng rng(11);
    for (int i = 0; i < 300; ++i)
    {
        const NodeId origin = ids[rng.below(ids.size())];
        const Key key = rng.below(key_space(bits));
        auto r = run_op(*c, MessageKind::SEARCH, origin, key);
        auto want = oracle_chord_path(ring, bits, origin.value, key);
        std::vector<std::uint64_t> got;
        for (auto n : r.path)
            got.push_back(n.value);
        REQUIRE(got == want);
        REQUIRE(r.hops <= bits);
    }
}

TEST_CASE("chord rejects range queries", "[chord]")
{
    auto c = build(chord(4), ids_of({1, 5, 9}));
    OperationSpec op{99, MessageKind::RANGE, NodeId{1}, 2, 8, {}};
    CHECK_THROWS_AS(c->apply(cmd::Operation{op}), UnsupportedOperation);
}

TEST_CASE("baton 8th node lands on the leaf level of a 7-node tree", "[baton]")
{
    auto ids = random_ids(8, 16, 5);
    auto c = build(baton(2, 16), std::vector<NodeId>(ids.begin(), ids.begin() + 7));
    const auto &t = dynamic_cast<const BatonStar &>(c->view().protocol());
    CHECK(t.height() == 2);
    join_node(*c, ids[7], ids[0]);
    CHECK(t.height() == 3);
    // Rebuilding from scratch fills heap slots 0..7 in level order.
    std::set<std::uint64_t> slots;
    for (std::size_t i = 0; i < 8; ++i)
        slots.insert(*t.slot_of(ids[i]));
    CHECK(slots == std::set<std::uint64_t>{0, 1, 2, 3, 4, 5, 6, 7});
    CHECK(*t.slot_of(ids[7]) == 7);
}

TEST_CASE("baton ranges partition the key space in in-order", "[baton]")
{
    for (unsigned m : {2u, 3u, 5u})
    {
        auto c = build(baton(m, 20), random_ids(300, 20, m));
        const auto &t = dynamic_cast<const BatonStar &>(c->view().protocol());
        Key expect = 0;
        for (auto n : t.in_order())
        {
            auto [lo, hi] = t.range_of(n);
            REQUIRE(lo == expect);
            REQUIRE(hi > lo);
            expect = hi;
        }
        CHECK(expect == key_space(20));
    }
}

TEST_CASE("baton height stays within ceil(log_m N) + 1", "[baton]")
{
    for (unsigned m : {2u, 4u, 7u, 10u})
    {
        auto ids = random_ids(500, 24, m);
        auto c = build(baton(m, 24), ids);
        const auto &t = dynamic_cast<const BatonStar &>(c->view().protocol());
        const double bound = std::ceil(std::log(500.0) / std::log(double(m))) + 1;
        CHECK(t.height() <= bound);
    }
}

TEST_CASE("baton lookups reach the owner and insert/delete behave", "[baton]")
{
    auto ids = random_ids(400, 24, 9);
    auto c = build(baton(3, 24), ids);
    const auto &view = c->view();
    Rng rng(4);
    for (int i = 0; i < 300; ++i)
    {
        const NodeId origin = ids[rng.below(ids.size())];
        const Key key = rng.below(key_space(24));
        auto r = run_op(*c, MessageKind::SEARCH, origin, key);
        REQUIRE(r.status == OpStatus::Ok);
        REQUIRE(r.owner == *view.protocol().owner_of(view, key));
        REQUIRE(r.hops == r.path.size() - 1);
    }
    auto ins = run_op(*c, MessageKind::INSERT, ids[3], 12345, 0, {1, 2, 3});
    CHECK(ins.status == OpStatus::Ok);
    auto look = run_op(*c, MessageKind::SEARCH, ids[17], 12345);
    REQUIRE(look.value);
    CHECK(*look.value == std::vector<std::uint8_t>{1, 2, 3});
    CHECK(run_op(*c, MessageKind::DELETE, ids[5], 12345).status == OpStatus::Ok);
    CHECK_FALSE(run_op(*c, MessageKind::SEARCH, ids[8], 12345).value);
    auto missing = run_op(*c, MessageKind::DELETE, ids[5], 777);
    CHECK(missing.status == OpStatus::NotFound);
    CHECK(missing.hops == missing.path.size() - 1);
}

TEST_CASE("lookup of a self-owned key costs no hops", "[baton]")
{
    auto ids = random_ids(50, 20, 2);
    auto c = build(baton(2, 20), ids);
    const auto &t = dynamic_cast<const BatonStar &>(c->view().protocol());
    auto [lo, hi] = t.range_of(ids[10]);
    auto r = run_op(*c, MessageKind::SEARCH, ids[10], lo + (hi - lo) / 2);
    CHECK(r.hops == 0);
    CHECK(r.owner == ids[10]);
    CHECK(c->view().log_count(MessageKind::SEARCH) == 0);
}

TEST_CASE("baton range query matches a global key filter", "[baton][range]")
{
    auto ids = random_ids(200, 16, 12);
    auto c = build(baton(2, 16), ids);
    Rng rng(8);
    std::map<Key, std::vector<std::uint8_t>> oracle;
    for (int i = 0; i < 400; ++i)
    {
        const Key k = rng.below(key_space(16));
        std::vector<std::uint8_t> v{static_cast<std::uint8_t>(i & 0xff)};
        run_op(*c, MessageKind::INSERT, ids[rng.below(ids.size())], k, 0, v);
        oracle[k] = v;
    }
    for (int q = 0; q < 50; ++q)
    {
        Key lo = rng.below(key_space(16));
        Key hi = std::min<Key>(key_space(16) - 1, lo + rng.below(4000));
        auto r = run_op(*c, MessageKind::RANGE, ids[rng.below(ids.size())], lo, hi);
        REQUIRE(r.status == OpStatus::Ok);
        std::vector<std::pair<Key, std::vector<std::uint8_t>>> want(oracle.lower_bound(lo), oracle.upper_bound(hi));
        REQUIRE(r.matches == want);
    }
}

TEST_CASE("range over three consecutive owners costs lookup hops + 2", "[baton][range]")
{
    auto ids = random_ids(64, 20, 21);
    auto c = build(baton(2, 20), ids);
    const auto &t = dynamic_cast<const BatonStar &>(c->view().protocol());
    auto order = t.in_order();
    const NodeId first = order[20], third = order[22];
    const Key lo = t.range_of(first).first;
    const Key hi = t.range_of(third).second - 1;
    const NodeId origin = order[50];
    auto look = run_op(*c, MessageKind::SEARCH, origin, lo);
    auto r = run_op(*c, MessageKind::RANGE, origin, lo, hi);
    CHECK(r.hops == look.hops + 2);
    CHECK(r.visited_owners == std::vector<NodeId>{order[20], order[21], order[22]});
}

TEST_CASE("dummy protocol always takes one hop", "[dummy]")
{
    auto ids = random_ids(100, 16, 1);
    auto c = build({"dummy", 2, 16}, ids);
    auto joins = c->engine().stats().summary("join_hops");
    CHECK(joins.min == 1);
    CHECK(joins.max == 1);
    Rng rng(3);
    for (int i = 0; i < 100; ++i)
    {
        auto r = run_op(*c, MessageKind::SEARCH, ids[rng.below(100)], rng.below(key_space(16)));
        REQUIRE(r.hops == 1);
    }
    auto s = c->engine().stats().summary("lookup_hops");
    CHECK(s.min == 1);
    CHECK(s.max == 1);
}

TEST_CASE("operation against a failed owner yields one QUERYFAILED_RES", "[churn]")
{
    auto ids = random_ids(100, 20, 14);
    auto c = build(baton(2, 20), ids);
    const auto &view = c->view();
    const Key key = 4242;
    const NodeId owner = *view.protocol().owner_of(view, key);
    c->apply(cmd::Fail{{owner}});
    NodeId origin = ids[0] == owner ? ids[1] : ids[0];
    auto r = run_op(*c, MessageKind::DELETE, origin, key);
    CHECK(r.status == OpStatus::Failed);
    CHECK(view.log_count(MessageKind::QUERYFAILED_RES) == 1);
}

TEST_CASE("protocol spec validation", "[protocol]")
{
    CHECK_THROWS_AS(make_protocol({"baton_star", 11, 32}), InvalidParams);
    CHECK_THROWS_AS(make_protocol({"baton_star", 1, 32}), InvalidParams);
    CHECK_THROWS_AS(make_protocol({"nbdt", 2, 32}), UnsupportedOperation);
    CHECK_THROWS_AS(make_protocol({"pastry", 2, 32}), InvalidParams);
    CHECK(make_protocol({"chord", 2, 8})->name() == "chord");
}

TEST_CASE("baton lookup detours around a failed intermediate node", "[baton][churn]")
{
    auto ids = random_ids(300, 32, 21);
    auto c = build(baton(2), ids);
    Rng rng(5);
    int detoured = 0;
    for (int i = 0; i < 40 && detoured < 5; ++i)
    {
        const NodeId origin = c->view().working_members()[rng.below(c->view().working_members().size())];
        const Key key = rng.below(key_space(32));
        auto r = run_op(*c, MessageKind::SEARCH, origin, key);
        REQUIRE(r.status == OpStatus::Ok);
        if (r.path.size() < 3)
            continue;
        const NodeId middle = r.path[r.path.size() / 2];
        c->apply(cmd::Fail{{middle}});
        auto again = run_op(*c, MessageKind::SEARCH, origin, key);
        CHECK(again.status == OpStatus::Ok);
        CHECK(again.owner == r.owner);
        CHECK(std::find(again.path.begin(), again.path.end(), middle) == again.path.end());
        ++detoured;
    }
    CHECK(detoured == 5);
}
