#include "gateprune/builder.hpp"

#include <algorithm>
#include <set>

namespace gateprune {

MismatchPolicy mismatch_policy_from_name(const std::string& name) {
    if (name == "skip") return MismatchPolicy::skip;
    if (name == "adapt") return MismatchPolicy::adapt;
    throw TensorError("unknown mismatch policy '" + name + "' (expected skip or adapt)");
}

std::vector<NodeSpec> make_dimension_adapter(const std::vector<int>& src_in,
                                             const std::vector<int>& dst_in,
                                             const std::string& id_prefix) {
    auto strip = [](const std::vector<int>& s) {
        if (s.size() == 4) return std::vector<int>(s.begin() + 1, s.end());
        return s;
    };
    const std::vector<int> src = strip(src_in), dst = strip(dst_in);
    if (src.size() != 3 || dst.size() != 3) {
        throw TensorError("dimension adapter needs activation shapes, got " + shape_str(src_in) + " -> " +
                          shape_str(dst_in));
    }
    if (src == dst) return {};
    if (dst[1] > src[1] || dst[2] > src[2]) {
        throw TensorError("adapter cannot upsample: src " + shape_str(src) + " -> dst " + shape_str(dst));
    }
    if (src[1] % dst[1] != 0 || src[2] % dst[2] != 0 || src[1] / dst[1] != src[2] / dst[2]) {
        throw TensorError("adapter spatial ratio not integral: src " + shape_str(src) + " -> dst " +
                          shape_str(dst));
    }
    const int ratio = src[1] / dst[1];
    std::vector<NodeSpec> chain;
    if (ratio > 1) {
        NodeSpec pool;
        pool.id = id_prefix + "_pool";
        pool.kind = NodeKind::pool;
        pool.pool = {PoolMode::avg, ratio, ratio};
        pool.prunable = false;
        pool.artificial = true;
        chain.push_back(std::move(pool));
    }
    if (src[0] != dst[0]) {
        NodeSpec proj;
        proj.id = id_prefix + "_proj";
        proj.kind = NodeKind::conv;
        proj.conv = {dst[0], 1, 1, 0, /*bias=*/false};
        proj.prunable = false;
        proj.artificial = true;
        chain.push_back(std::move(proj));
    }
    return chain;
}

namespace {

bool in_any_branch(const ModelSpec& spec, const std::string& id) {
    for (const auto& br : spec.branches)
        if (std::find(br.members.begin(), br.members.end(), id) != br.members.end()) return true;
    return false;
}

// Walk backward from `from` toward `src` through shortcut plumbing only:
// non-prunable conv/pool/batchnorm outside every branch (native projections)
// or artificial adapters. Fills `chain` (nearest-to-src first) with the
// artificial intermediates.
bool traces_back_to(const ModelSpec& spec, const std::string& from, const std::string& src,
                    std::vector<std::string>* chain) {
    std::string cur = from;
    std::vector<std::string> seen;
    for (int depth = 0; depth < 6; ++depth) {
        if (cur == src) {
            if (chain) {
                for (auto it = seen.rbegin(); it != seen.rend(); ++it)
                    if (spec.node(*it).artificial) chain->push_back(*it);
            }
            return true;
        }
        const NodeSpec& n = spec.node(cur);
        const bool plumbing = (n.kind == NodeKind::conv || n.kind == NodeKind::pool ||
                               n.kind == NodeKind::batchnorm) &&
                              !n.prunable && !in_any_branch(spec, cur);
        if (!plumbing) return false;
        auto prods = producers_of(spec, cur);
        if (prods.size() != 1) return false;
        seen.push_back(cur);
        cur = prods[0];
    }
    return false;
}

struct Structure {
    std::string site_id;
    std::vector<std::string> members;
    std::string entry_src;   // producer feeding the structure from outside
    std::string exit;        // last node of the structure
};

// One prunable structure per conv stack / branch group / block group.
std::vector<Structure> collect_structures(const ModelSpec& spec, Granularity g) {
    std::vector<Structure> out;
    if (g == Granularity::layer) {
        for (const auto& n : spec.nodes) {
            if (n.kind != NodeKind::conv || !n.prunable || n.artificial) continue;
            Structure s;
            s.site_id = "layer:" + n.id;
            s.members = conv_stack(spec, n.id);
            auto prods = producers_of(spec, n.id);
            if (prods.size() != 1) continue;
            s.entry_src = prods[0];
            s.exit = s.members.back();
            out.push_back(std::move(s));
        }
    } else if (g == Granularity::branch) {
        for (const auto& br : spec.branches) {
            Structure s;
            s.site_id = "branch:" + br.id;
            s.members = br.members;
            auto prods = producers_of(spec, br.members.front());
            if (prods.size() != 1) continue;
            s.entry_src = prods[0];
            s.exit = br.members.back();
            out.push_back(std::move(s));
        }
    } else {
        for (const auto& blk : spec.blocks) {
            Structure s;
            s.site_id = "block:" + blk.id;
            std::vector<const BranchGroup*> brs;
            for (const auto& bid : blk.branches)
                for (const auto& br : spec.branches)
                    if (br.id == bid) brs.push_back(&br);
            if (brs.empty()) continue;
            std::set<std::string> entries;
            for (const auto* br : brs) {
                auto prods = producers_of(spec, br->members.front());
                if (prods.size() == 1) entries.insert(prods[0]);
                for (const auto& m : br->members) s.members.push_back(m);
            }
            if (entries.size() != 1) continue;  // branches must share an entry
            s.entry_src = *entries.begin();
            if (brs.size() == 1) {
                s.exit = brs[0]->members.back();
            } else {
                // Exit is the merge add consuming every branch's last member.
                std::set<std::string> merge;
                bool first = true;
                for (const auto* br : brs) {
                    auto cons = consumers_of(spec, br->members.back());
                    std::set<std::string> cs(cons.begin(), cons.end());
                    if (first) {
                        merge = cs;
                        first = false;
                    } else {
                        std::set<std::string> inter;
                        std::set_intersection(merge.begin(), merge.end(), cs.begin(), cs.end(),
                                              std::inserter(inter, inter.begin()));
                        merge = inter;
                    }
                }
                std::string merge_add;
                for (const auto& m : merge)
                    if (spec.node(m).kind == NodeKind::add) merge_add = m;
                if (merge_add.empty()) continue;  // no common merge point
                s.exit = merge_add;
                s.members.push_back(merge_add);
            }
            out.push_back(std::move(s));
        }
    }
    return out;
}

// If structure members sit inside a branch group, splice newly inserted path
// nodes into that group so the path annotation stays connected.
void splice_into_branches(ModelSpec& spec, const std::vector<std::string>& members,
                          const std::string& new_node) {
    for (auto& br : spec.branches) {
        for (const auto& m : members) {
            auto it = std::find(br.members.begin(), br.members.end(), m);
            if (it == br.members.end()) continue;
            auto last = br.members.begin();
            for (const auto& mm : members) {
                auto pos = std::find(br.members.begin(), br.members.end(), mm);
                if (pos != br.members.end() && pos >= last) last = pos;
            }
            br.members.insert(last + 1, new_node);
            return;
        }
    }
}

}  // namespace

ModelSpec insert_shortcuts(const ModelSpec& input, Granularity granularity, MismatchPolicy policy) {
    if (granularity == Granularity::filter) {
        throw TensorError("insert_shortcuts applies to layer, branch or block granularity only");
    }
    ModelSpec spec = input;
    auto shapes = validate_or_throw(spec).shapes;

    for (const auto& st : collect_structures(spec, granularity)) {
        if (spec.find_site(st.site_id)) continue;  // already shortcut on a previous run

        // Reuse an existing add: one consuming the exit whose other input
        // traces back to the entry (native residual, or our own insertion).
        std::string reuse_add;
        std::string reuse_shortcut_src;
        std::vector<std::string> reuse_adapters;
        bool merge_style = false;
        for (const auto& c : consumers_of(spec, st.exit)) {
            if (spec.node(c).kind != NodeKind::add) continue;
            for (const auto& other : producers_of(spec, c)) {
                if (other == st.exit) continue;
                std::vector<std::string> chain;
                if (traces_back_to(spec, other, st.entry_src, &chain)) {
                    reuse_add = c;
                    reuse_shortcut_src = st.entry_src;
                    reuse_adapters = chain;
                    break;
                }
            }
            if (!reuse_add.empty()) break;
            if (granularity == Granularity::branch) {
                // Sibling-merge add: every other input is another branch of
                // the same block; the gate then only scales this input.
                bool all_branch_exits = true;
                for (const auto& other : producers_of(spec, c)) {
                    if (other == st.exit) continue;
                    if (!in_any_branch(spec, other)) all_branch_exits = false;
                }
                if (all_branch_exits && producers_of(spec, c).size() >= 2) {
                    reuse_add = c;
                    merge_style = true;
                    break;
                }
            }
        }

        ShortcutSite site;
        site.id = st.site_id;
        site.granularity = granularity;
        site.members = st.members;
        site.structure_out = st.exit;

        if (!reuse_add.empty()) {
            site.add_node = reuse_add;
            site.shortcut_src = merge_style ? "" : reuse_shortcut_src;
            site.adapters = reuse_adapters;
            site.artificial_add = spec.node(reuse_add).artificial;
            spec.sites.push_back(std::move(site));
            continue;
        }

        const auto& out_shape = shapes.at(st.exit);
        const auto& in_shape = shapes.at(st.entry_src);
        std::string shortcut_tail = st.entry_src;
        if (in_shape != out_shape) {
            if (policy == MismatchPolicy::skip) continue;  // un-shortcut, un-gated
            auto chain = make_dimension_adapter(in_shape, out_shape, "adapt_" + st.site_id);
            for (auto& n : chain) {
                // Replace ':' from the site id; node ids stay plain.
                std::replace(n.id.begin(), n.id.end(), ':', '_');
                spec.edges.emplace_back(shortcut_tail, n.id);
                shortcut_tail = n.id;
                site.adapters.push_back(n.id);
                spec.nodes.push_back(std::move(n));
            }
        }

        NodeSpec add_node;
        add_node.id = "sc_" + st.site_id;
        std::replace(add_node.id.begin(), add_node.id.end(), ':', '_');
        add_node.kind = NodeKind::add;
        add_node.prunable = false;
        add_node.artificial = true;
        // Consumers of the exit now read the add instead.
        for (auto& [p, c] : spec.edges) {
            if (p == st.exit) p = add_node.id;
        }
        spec.edges.emplace_back(st.exit, add_node.id);
        spec.edges.emplace_back(shortcut_tail, add_node.id);
        spec.nodes.push_back(add_node);
        if (granularity == Granularity::layer) {
            // A stack-level add inserted inside a branch path becomes part of
            // that path; branch/block adds sit outside their structure.
            splice_into_branches(spec, st.members, add_node.id);
        }

        site.add_node = add_node.id;
        site.shortcut_src = st.entry_src;
        site.artificial_add = true;
        spec.sites.push_back(std::move(site));
    }

    validate_or_throw(spec);
    return spec;
}

}  // namespace gateprune
