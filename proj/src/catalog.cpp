#include "gateprune/catalog.hpp"

#include <algorithm>

namespace gateprune {

namespace {

// Small chain-building helper: wires each appended node to the current tail.
struct Chain {
    ModelSpec spec;
    std::string tail;

    void input(std::vector<int> shape, int classes, std::string name) {
        spec.name = std::move(name);
        spec.input_shape = std::move(shape);
        spec.num_classes = classes;
        NodeSpec n;
        n.id = "input";
        n.kind = NodeKind::input;
        n.prunable = false;
        spec.nodes.push_back(n);
        tail = "input";
    }

    std::string append(NodeSpec n, const std::string& from = "") {
        const std::string src = from.empty() ? tail : from;
        spec.edges.emplace_back(src, n.id);
        tail = n.id;
        spec.nodes.push_back(std::move(n));
        return tail;
    }

    std::string conv(const std::string& id, int out, int k, int s, int p,
                     bool bias = true, bool prunable = true, const std::string& from = "") {
        NodeSpec n;
        n.id = id;
        n.kind = NodeKind::conv;
        n.conv = {out, k, s, p, bias};
        n.prunable = prunable;
        return append(std::move(n), from);
    }

    std::string bn(const std::string& id, bool prunable = true) {
        NodeSpec n;
        n.id = id;
        n.kind = NodeKind::batchnorm;
        n.prunable = prunable;
        return append(std::move(n));
    }

    std::string relu(const std::string& id) {
        NodeSpec n;
        n.id = id;
        n.kind = NodeKind::relu;
        return append(std::move(n));
    }

    std::string pool(const std::string& id, PoolMode mode, int w, int s) {
        NodeSpec n;
        n.id = id;
        n.kind = NodeKind::pool;
        n.pool = {mode, w, s};
        n.prunable = false;
        return append(std::move(n));
    }

    std::string flatten(const std::string& id) {
        NodeSpec n;
        n.id = id;
        n.kind = NodeKind::flatten;
        n.prunable = false;
        return append(std::move(n));
    }

    std::string dense(const std::string& id, int out) {
        NodeSpec n;
        n.id = id;
        n.kind = NodeKind::dense;
        n.dense = {out};
        return append(std::move(n));
    }

    std::string dropout(const std::string& id, double rate) {
        NodeSpec n;
        n.id = id;
        n.kind = NodeKind::dropout;
        n.dropout = {rate};
        n.prunable = false;
        return append(std::move(n));
    }

    std::string add2(const std::string& id, const std::string& a, const std::string& b) {
        NodeSpec n;
        n.id = id;
        n.kind = NodeKind::add;
        n.prunable = false;
        spec.edges.emplace_back(a, n.id);
        spec.edges.emplace_back(b, n.id);
        tail = n.id;
        spec.nodes.push_back(std::move(n));
        return tail;
    }

    void conv_block(const std::string& prefix, int out) {
        conv(prefix, out, 3, 1, 1);
        bn("bn_" + prefix);
        relu("relu_" + prefix);
    }
};

ModelSpec make_vgg16_custom() {
    Chain c;
    c.input({3, 32, 32}, 10, "vgg16_custom");
    const std::vector<std::vector<int>> stages = {{64, 64}, {128, 128}, {256, 256, 256},
                                                  {512, 512, 512}, {512, 512, 512}};
    int idx = 1;
    for (std::size_t s = 0; s < stages.size(); ++s) {
        for (int ch : stages[s]) {
            c.conv_block("conv" + std::to_string(idx), ch);
            ++idx;
        }
        c.pool("pool" + std::to_string(s + 1), PoolMode::max, 2, 2);
    }
    c.flatten("flatten");
    c.dense("fc1", 512);
    c.bn("bn_fc1");
    c.relu("relu_fc1");
    c.dropout("drop_fc1", 0.5);
    c.dense("fc2", 512);
    c.bn("bn_fc2");
    c.relu("relu_fc2");
    c.dense("fc3", 10);
    return c.spec;
}

ModelSpec make_mini_vgg8() {
    Chain c;
    c.input({1, 28, 28}, 10, "mini_vgg8");
    c.conv_block("conv1", 8);
    c.conv_block("conv2", 8);
    c.pool("pool1", PoolMode::max, 2, 2);
    c.conv_block("conv3", 16);
    c.conv_block("conv4", 16);
    c.pool("pool2", PoolMode::max, 2, 2);
    c.conv_block("conv5", 32);
    c.conv_block("conv6", 32);
    c.flatten("flatten");
    c.dense("fc1", 64);
    c.bn("bn_fc1");
    c.relu("relu_fc1");
    c.dropout("drop_fc1", 0.5);
    c.dense("fc2", 10);
    return c.spec;
}

void res_block(Chain& c, const std::string& id, int out, bool transition) {
    const std::string entry = c.tail;
    c.conv(id + "_conva", out, 3, transition ? 2 : 1, 1);
    c.bn(id + "_bna");
    c.relu(id + "_relua");
    c.conv(id + "_convb", out, 3, 1, 1);
    const std::string exit = c.bn(id + "_bnb");
    std::string shortcut = entry;
    if (transition) {
        // Native projection shortcut: 1x1 stride-2 conv + bn, not prunable.
        c.conv(id + "_proj", out, 1, 2, 0, /*bias=*/false, /*prunable=*/false, entry);
        shortcut = c.bn(id + "_projbn", /*prunable=*/false);
    }
    c.add2(id + "_add", exit, shortcut);
    c.relu(id + "_relu");
    c.spec.branches.push_back(
        {id, {id + "_conva", id + "_bna", id + "_relua", id + "_convb", id + "_bnb"}});
    c.spec.blocks.push_back({id, {id}});
}

ModelSpec make_resnet56() {
    Chain c;
    c.input({3, 32, 32}, 10, "resnet56");
    c.conv("stem", 16, 3, 1, 1);
    c.bn("bn_stem");
    c.relu("relu_stem");
    const int widths[3] = {16, 32, 64};
    for (int stage = 0; stage < 3; ++stage) {
        for (int blk = 0; blk < 9; ++blk) {
            const bool transition = stage > 0 && blk == 0;
            res_block(c, "s" + std::to_string(stage + 1) + "b" + std::to_string(blk + 1),
                      widths[stage], transition);
        }
    }
    c.pool("gap", PoolMode::avg, 8, 8);
    c.flatten("flatten");
    c.dense("fc", 10);
    return c.spec;
}

ModelSpec make_mini_resnet() {
    Chain c;
    c.input({1, 16, 16}, 2, "mini_resnet");
    c.conv("stem", 8, 3, 1, 1);
    c.bn("bn_stem");
    c.relu("relu_stem");
    for (int blk = 0; blk < 3; ++blk) {
        res_block(c, "rb" + std::to_string(blk + 1), 8, false);
    }
    c.pool("gap", PoolMode::avg, 16, 16);
    c.flatten("flatten");
    c.dense("fc", 2);
    return c.spec;
}

}  // namespace

std::vector<std::string> builtin_spec_names() {
    return {"mini_resnet", "mini_vgg8", "resnet56", "vgg16_custom"};
}

ModelSpec builtin_spec(const std::string& name) {
    if (name == "vgg16_custom") return make_vgg16_custom();
    if (name == "resnet56") return make_resnet56();
    if (name == "mini_vgg8") return make_mini_vgg8();
    if (name == "mini_resnet") return make_mini_resnet();
    std::string available;
    for (const auto& n : builtin_spec_names()) available += (available.empty() ? "" : ", ") + n;
    throw TensorError("unknown spec '" + name + "'; available: " + available);
}

}  // namespace gateprune
