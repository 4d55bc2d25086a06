#pragma once

#include "gateprune/model_spec.hpp"

namespace gateprune {

enum class MismatchPolicy { skip, adapt };

MismatchPolicy mismatch_policy_from_name(const std::string& name);

// Adapter chain reshaping src {C,H,W} to dst: 1x1 conv for depth, pooling for
// spatial (window/stride = the integral ratio), pooling then 1x1 conv for
// both. Empty when shapes already match. Nodes come back artificial,
// non-prunable, and unwired; ids are derived from id_prefix.
std::vector<NodeSpec> make_dimension_adapter(const std::vector<int>& src_shape,
                                             const std::vector<int>& dst_shape,
                                             const std::string& id_prefix);

// Adds a parallel identity edge (plus an add node, plus adapters under policy
// adapt) around every prunable structure of the given granularity: conv
// stacks for layer, annotated branch groups for branch, annotated block
// groups for block. Native residual adds are detected and reused; running
// the operation twice is a no-op. Mismatched sites are left untouched under
// policy skip. Only add/adapter nodes and edges are introduced; existing
// nodes are never modified or deleted.
ModelSpec insert_shortcuts(const ModelSpec& spec, Granularity granularity, MismatchPolicy policy);

}  // namespace gateprune
