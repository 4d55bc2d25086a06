#include "gateprune/model_spec.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace gateprune {

const char* granularity_name(Granularity g) {
    switch (g) {
        case Granularity::filter: return "filter";
        case Granularity::layer: return "layer";
        case Granularity::branch: return "branch";
        case Granularity::block: return "block";
    }
    return "?";
}

Granularity granularity_from_name(const std::string& name) {
    if (name == "filter") return Granularity::filter;
    if (name == "layer") return Granularity::layer;
    if (name == "branch") return Granularity::branch;
    if (name == "block") return Granularity::block;
    throw TensorError("unknown granularity '" + name + "' (expected filter, layer, branch or block)");
}

const char* node_kind_name(NodeKind k) {
    switch (k) {
        case NodeKind::input: return "input";
        case NodeKind::conv: return "conv";
        case NodeKind::dense: return "dense";
        case NodeKind::pool: return "pool";
        case NodeKind::batchnorm: return "batchnorm";
        case NodeKind::relu: return "relu";
        case NodeKind::add: return "add";
        case NodeKind::flatten: return "flatten";
        case NodeKind::dropout: return "dropout";
    }
    return "?";
}

NodeKind node_kind_from_name(const std::string& name) {
    static const std::map<std::string, NodeKind> table = {
        {"input", NodeKind::input},       {"conv", NodeKind::conv},   {"dense", NodeKind::dense},
        {"pool", NodeKind::pool},         {"batchnorm", NodeKind::batchnorm}, {"relu", NodeKind::relu},
        {"add", NodeKind::add},           {"flatten", NodeKind::flatten},     {"dropout", NodeKind::dropout},
    };
    auto it = table.find(name);
    if (it == table.end()) throw TensorError("unknown node kind '" + name + "'");
    return it->second;
}

bool ModelSpec::has(const std::string& id) const {
    return std::any_of(nodes.begin(), nodes.end(), [&](const NodeSpec& n) { return n.id == id; });
}

const NodeSpec& ModelSpec::node(const std::string& id) const {
    for (const auto& n : nodes)
        if (n.id == id) return n;
    throw TensorError("unknown node '" + id + "'");
}

NodeSpec& ModelSpec::node(const std::string& id) {
    for (auto& n : nodes)
        if (n.id == id) return n;
    throw TensorError("unknown node '" + id + "'");
}

const ShortcutSite* ModelSpec::find_site(const std::string& site_id) const {
    for (const auto& s : sites)
        if (s.id == site_id) return &s;
    return nullptr;
}

std::vector<std::string> producers_of(const ModelSpec& spec, const std::string& id) {
    std::vector<std::string> out;
    for (const auto& [p, c] : spec.edges)
        if (c == id) out.push_back(p);
    return out;
}

std::vector<std::string> consumers_of(const ModelSpec& spec, const std::string& id) {
    std::vector<std::string> out;
    for (const auto& [p, c] : spec.edges)
        if (p == id) out.push_back(c);
    return out;
}

std::vector<std::string> topo_order(const ModelSpec& spec) {
    std::map<std::string, int> in_degree;
    for (const auto& n : spec.nodes) in_degree[n.id] = 0;
    for (const auto& [p, c] : spec.edges) {
        if (in_degree.count(c)) in_degree[c] += 1;
        (void)p;
    }
    std::vector<std::string> order;
    std::vector<std::string> ready;
    for (const auto& n : spec.nodes)
        if (in_degree[n.id] == 0) ready.push_back(n.id);
    while (!ready.empty()) {
        std::string id = ready.front();
        ready.erase(ready.begin());
        order.push_back(id);
        for (const auto& c : consumers_of(spec, id)) {
            if (--in_degree[c] == 0) {
                // Keep node-declaration order for determinism.
                auto pos = ready.end();
                ready.insert(pos, c);
            }
        }
    }
    return order;  // shorter than nodes.size() iff a cycle exists
}

std::vector<std::string> conv_stack(const ModelSpec& spec, const std::string& conv_id) {
    std::vector<std::string> stack{conv_id};
    std::string cur = conv_id;
    while (true) {
        auto consumers = consumers_of(spec, cur);
        if (consumers.size() != 1) break;
        const std::string& next = consumers[0];
        if (!spec.has(next)) break;
        const NodeSpec& n = spec.node(next);
        if (n.kind != NodeKind::batchnorm && n.kind != NodeKind::relu) break;
        if (producers_of(spec, next).size() != 1) break;
        stack.push_back(next);
        cur = next;
    }
    return stack;
}

std::string output_node(const ModelSpec& spec) {
    for (const auto& n : spec.nodes) {
        if (consumers_of(spec, n.id).empty()) return n.id;
    }
    throw TensorError("spec has no terminal node");
}

namespace {

std::string fmt_shape(const std::vector<int>& s) { return shape_str(s); }

}  // namespace

ValidationResult validate(const ModelSpec& spec) {
    ValidationResult res;
    auto flag = [&](const std::string& msg) { res.violations.push_back(msg); };

    if (spec.nodes.empty()) {
        flag("no nodes");
        return res;
    }
    if (spec.input_shape.size() != 3) {
        flag("input shape must be C,H,W, got " + fmt_shape(spec.input_shape));
        return res;
    }
    if (spec.num_classes < 1) flag("class count must be >= 1");

    std::set<std::string> ids;
    int input_count = 0;
    for (const auto& n : spec.nodes) {
        if (!ids.insert(n.id).second) flag("duplicate node id '" + n.id + "'");
        if (n.kind == NodeKind::input) ++input_count;
        if (n.artificial && n.prunable) flag("artificial node '" + n.id + "' must not be prunable");
    }
    if (input_count != 1) flag("spec must contain exactly one input node, found " + std::to_string(input_count));
    for (const auto& [p, c] : spec.edges) {
        if (!ids.count(p)) flag("edge references nonexistent producer '" + p + "'");
        if (!ids.count(c)) flag("edge references nonexistent consumer '" + c + "'");
    }
    if (!res.violations.empty()) return res;

    auto order = topo_order(spec);
    if (order.size() != spec.nodes.size()) {
        std::set<std::string> placed(order.begin(), order.end());
        std::string cyc;
        for (const auto& n : spec.nodes)
            if (!placed.count(n.id)) cyc += (cyc.empty() ? "" : ", ") + n.id;
        flag("cycle involving nodes: " + cyc);
        return res;
    }

    for (const auto& id : order) {
        const NodeSpec& n = spec.node(id);
        auto prods = producers_of(spec, id);
        std::vector<std::vector<int>> in_shapes;
        for (const auto& p : prods) in_shapes.push_back(res.shapes[p]);

        auto need_one_4d = [&]() -> const std::vector<int>* {
            if (prods.size() != 1) {
                flag("node '" + id + "' needs exactly one producer, has " + std::to_string(prods.size()));
                return nullptr;
            }
            if (in_shapes[0].size() != 3) {
                flag("node '" + id + "' needs a C,H,W input, got " + fmt_shape(in_shapes[0]));
                return nullptr;
            }
            return &in_shapes[0];
        };

        switch (n.kind) {
            case NodeKind::input: {
                if (!prods.empty()) flag("input node '" + id + "' must have no producers");
                res.shapes[id] = spec.input_shape;
                break;
            }
            case NodeKind::conv: {
                const auto* in = need_one_4d();
                if (!in) break;
                const auto& a = n.conv;
                if (a.out_channels < 1 || a.kernel < 1 || a.stride < 1 || a.padding < 0) {
                    flag("conv '" + id + "' has invalid attributes");
                    break;
                }
                const int hn = (*in)[1] + 2 * a.padding - a.kernel;
                const int wn = (*in)[2] + 2 * a.padding - a.kernel;
                if (hn < 0 || wn < 0 || hn % a.stride != 0 || wn % a.stride != 0) {
                    flag("conv '" + id + "' output extent not integral for input " + fmt_shape(*in));
                    break;
                }
                res.shapes[id] = {a.out_channels, hn / a.stride + 1, wn / a.stride + 1};
                break;
            }
            case NodeKind::pool: {
                const auto* in = need_one_4d();
                if (!in) break;
                const auto& a = n.pool;
                if (a.window < 1 || a.stride < 1 || a.window > (*in)[1] || a.window > (*in)[2]) {
                    flag("pool '" + id + "' window " + std::to_string(a.window) + " invalid for input " +
                         fmt_shape(*in));
                    break;
                }
                const int hn = (*in)[1] - a.window;
                const int wn = (*in)[2] - a.window;
                if (hn % a.stride != 0 || wn % a.stride != 0) {
                    flag("pool '" + id + "' output extent not integral for input " + fmt_shape(*in));
                    break;
                }
                res.shapes[id] = {(*in)[0], hn / a.stride + 1, wn / a.stride + 1};
                break;
            }
            case NodeKind::dense: {
                if (prods.size() != 1) {
                    flag("node '" + id + "' needs exactly one producer, has " + std::to_string(prods.size()));
                    break;
                }
                if (in_shapes[0].size() != 1) {
                    flag("dense '" + id + "' needs a flattened input, got " + fmt_shape(in_shapes[0]));
                    break;
                }
                if (n.dense.out_features < 1) {
                    flag("dense '" + id + "' has invalid out_features");
                    break;
                }
                res.shapes[id] = {n.dense.out_features};
                break;
            }
            case NodeKind::batchnorm:
            case NodeKind::relu:
            case NodeKind::dropout: {
                if (prods.size() != 1) {
                    flag("node '" + id + "' needs exactly one producer, has " + std::to_string(prods.size()));
                    break;
                }
                res.shapes[id] = in_shapes[0];
                break;
            }
            case NodeKind::add: {
                if (prods.size() < 2) {
                    flag("add '" + id + "' needs at least two producers, has " + std::to_string(prods.size()));
                    break;
                }
                for (std::size_t i = 1; i < in_shapes.size(); ++i) {
                    if (in_shapes[i] != in_shapes[0]) {
                        flag("add '" + id + "' input shapes disagree: " + fmt_shape(in_shapes[0]) + " vs " +
                             fmt_shape(in_shapes[i]));
                        break;
                    }
                }
                res.shapes[id] = in_shapes[0];
                break;
            }
            case NodeKind::flatten: {
                const auto* in = need_one_4d();
                if (!in) break;
                res.shapes[id] = {(*in)[0] * (*in)[1] * (*in)[2]};
                break;
            }
        }
        if (!res.shapes.count(id)) res.shapes[id] = {};  // keep table total even on violations
    }
    if (!res.violations.empty()) return res;

    // Exactly one terminal whose shape is the class count.
    std::vector<std::string> terminals;
    for (const auto& n : spec.nodes)
        if (consumers_of(spec, n.id).empty()) terminals.push_back(n.id);
    if (terminals.size() != 1) {
        std::string t;
        for (const auto& s : terminals) t += (t.empty() ? "" : ", ") + s;
        flag("spec must have exactly one terminal node, found: " + t);
    } else if (res.shapes[terminals[0]] != std::vector<int>{spec.num_classes}) {
        flag("terminal node '" + terminals[0] + "' produces " + fmt_shape(res.shapes[terminals[0]]) +
             ", expected [" + std::to_string(spec.num_classes) + "]");
    }

    // Branch groups: existing members forming a connected path, disjoint
    // across branches.
    std::set<std::string> claimed;
    for (const auto& br : spec.branches) {
        if (br.members.empty()) {
            flag("branch '" + br.id + "' has no members");
            continue;
        }
        bool ok = true;
        for (const auto& m : br.members) {
            if (!spec.has(m)) {
                flag("branch '" + br.id + "' references nonexistent node '" + m + "'");
                ok = false;
            } else if (!claimed.insert(m).second) {
                flag("node '" + m + "' appears in more than one branch");
                ok = false;
            }
        }
        if (!ok) continue;
        for (std::size_t i = 0; i + 1 < br.members.size(); ++i) {
            auto cons = consumers_of(spec, br.members[i]);
            if (std::find(cons.begin(), cons.end(), br.members[i + 1]) == cons.end()) {
                flag("branch '" + br.id + "' members '" + br.members[i] + "' and '" + br.members[i + 1] +
                     "' are not connected");
            }
        }
    }
    std::set<std::string> branch_ids;
    for (const auto& br : spec.branches) branch_ids.insert(br.id);
    for (const auto& blk : spec.blocks) {
        if (blk.branches.empty()) flag("block '" + blk.id + "' lists no branches");
        for (const auto& b : blk.branches)
            if (!branch_ids.count(b)) flag("block '" + blk.id + "' references nonexistent branch '" + b + "'");
    }

    return res;
}

ValidationResult validate_or_throw(const ModelSpec& spec) {
    ValidationResult res = validate(spec);
    if (!res.ok()) {
        std::ostringstream os;
        os << "spec '" << spec.name << "' is invalid:";
        for (const auto& v : res.violations) os << "\n  - " << v;
        throw TensorError(os.str());
    }
    return res;
}

}  // namespace gateprune
