#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "smoothfit/lattice.hpp"

namespace smoothfit {

enum class ActionKind : std::uint8_t { control, stop, impulse };

/// Decision at one node: apply a control, stop, or jump to node `target`.
struct Action {
    ActionKind kind = ActionKind::control;
    std::size_t control = 0;
    std::size_t target = 0;

    bool operator==(const Action&) const = default;
};

/// Node-wise decision map; off-node queries use the nearest node.
struct FeedbackPolicy {
    lattice::Grid grid;
    std::vector<Action> actions;

    const Action& at(const Vector& x) const { return actions[grid.nearest_node(x)]; }
};

}  // namespace smoothfit
