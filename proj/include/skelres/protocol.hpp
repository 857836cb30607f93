#pragma once

#include <string>
#include <vector>

#include "skelres/skeleton.hpp"

namespace skelres {

/// Train/test partition over sequence identifiers (see sequence_id). The name
/// echoes the protocol plus, where the split rule was a recorded decision
/// rather than a published fact, a short statement of the rule used.
struct ProtocolSplit {
    std::string name;
    std::vector<std::string> train;
    std::vector<std::string> test;
};

/// Action classes a protocol restricts to (ascending), or empty when the
/// protocol keeps every action (the NTU splits).
std::vector<int> protocol_actions(const std::string& protocol);

/// All supported protocol identifiers.
std::vector<std::string> known_protocols();

/// Builds the train/test split for one of:
///   msr-as1, msr-as2, msr-as3           cross-subject, odd subjects train
///   kard-set{1,2,3}-{A,B,C}             A: first repetition trains; B: first
///                                       two train; C: odd subjects train
///   ntu-xsub                            fixed 20-subject training list
///   ntu-xview                           cameras 2 and 3 train, camera 1 tests
/// Sequences whose action lies outside the protocol's action set are left out
/// of both sides. Output id lists are sorted, so membership is independent of
/// input order.
ProtocolSplit make_split(const std::vector<SkeletonSequence>& sequences,
                         const std::string& protocol);

/// Dense labels for the actions appearing in a protocol: action ids sorted
/// ascending map to 0..M-1.
struct LabelMap {
    std::vector<int> actions;

    int num_classes() const { return static_cast<int>(actions.size()); }
    int label_of(int action_id) const;
    int action_of(int label) const;
};

/// Label map from the protocol's declared action set, or, for unrestricted
/// protocols, from the actions observed in the corpus.
LabelMap make_label_map(const std::vector<SkeletonSequence>& sequences,
                        const std::string& protocol);

}  // namespace skelres
