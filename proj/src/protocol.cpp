#include "skelres/protocol.hpp"

#include <algorithm>
#include <map>
#include <set>

namespace skelres {

namespace {

// MSR Action 3D subsets AS1/AS2/AS3 under the dataset's 1..20 action
// numbering, and KARD activity sets 1..3 under its 1..18 numbering.
const std::vector<int> kMsrAs1{2, 3, 5, 6, 10, 13, 18, 20};
const std::vector<int> kMsrAs2{1, 4, 7, 8, 9, 11, 12, 14};
const std::vector<int> kMsrAs3{6, 14, 15, 16, 17, 18, 19, 20};
const std::vector<int> kKardSet1{1, 3, 6, 9, 12, 14, 15, 18};
const std::vector<int> kKardSet2{2, 4, 7, 9, 10, 12, 13, 17};
const std::vector<int> kKardSet3{1, 5, 7, 8, 11, 15, 16, 17};

// Cross-subject training subjects for the large Kinect-v2 corpus.
const std::set<int> kNtuTrainSubjects{1,  2,  4,  5,  8,  9,  13, 14, 15, 16,
                                      17, 18, 19, 25, 27, 28, 31, 34, 35, 38};

struct KardProtocol {
    int set = 0;
    char experiment = 0;
};

bool parse_kard(const std::string& protocol, KardProtocol& out) {
    // kard-set{1,2,3}-{A,B,C}
    if (protocol.size() != 11 || protocol.rfind("kard-set", 0) != 0 || protocol[9] != '-')
        return false;
    const char set = protocol[8], exp = protocol[10];
    if (set < '1' || set > '3' || exp < 'A' || exp > 'C') return false;
    out.set = set - '0';
    out.experiment = exp;
    return true;
}

void require_subject(const SkeletonSequence& s) {
    if (s.subject_id < 1)
        throw MissingMetadataError("sequence " + sequence_id(s) + " lacks a subject id");
}

void require_action(const SkeletonSequence& s) {
    if (s.action_id < 1)
        throw MissingMetadataError("sequence " + sequence_id(s) + " lacks an action id");
}

}  // namespace

std::vector<int> protocol_actions(const std::string& protocol) {
    if (protocol == "msr-as1") return kMsrAs1;
    if (protocol == "msr-as2") return kMsrAs2;
    if (protocol == "msr-as3") return kMsrAs3;
    KardProtocol kard;
    if (parse_kard(protocol, kard))
        return kard.set == 1 ? kKardSet1 : kard.set == 2 ? kKardSet2 : kKardSet3;
    if (protocol == "ntu-xsub" || protocol == "ntu-xview") return {};
    throw UnknownProtocolError("unknown protocol '" + protocol + "'");
}

std::vector<std::string> known_protocols() {
    std::vector<std::string> out{"msr-as1", "msr-as2", "msr-as3"};
    for (int set = 1; set <= 3; ++set)
        for (char exp : {'A', 'B', 'C'})
            out.push_back("kard-set" + std::to_string(set) + "-" + exp);
    out.push_back("ntu-xsub");
    out.push_back("ntu-xview");
    return out;
}

ProtocolSplit make_split(const std::vector<SkeletonSequence>& sequences,
                         const std::string& protocol) {
    const std::vector<int> actions = protocol_actions(protocol);  // validates the name
    auto in_actions = [&](int a) {
        return actions.empty() || std::find(actions.begin(), actions.end(), a) != actions.end();
    };

    ProtocolSplit split;
    split.name = protocol;

    KardProtocol kard;
    if (protocol.rfind("msr-", 0) == 0) {
        split.name += " (train=subjects 1,3,5,7,9)";
        for (const auto& s : sequences) {
            require_action(s);
            if (!in_actions(s.action_id)) continue;
            require_subject(s);
            (s.subject_id % 2 == 1 ? split.train : split.test).push_back(sequence_id(s));
        }
    } else if (parse_kard(protocol, kard)) {
        if (kard.experiment == 'C') {
            split.name += " (train=odd subjects, test=even subjects)";
            for (const auto& s : sequences) {
                require_action(s);
                if (!in_actions(s.action_id)) continue;
                require_subject(s);
                (s.subject_id % 2 == 1 ? split.train : split.test).push_back(sequence_id(s));
            }
        } else {
            const int reps_training = kard.experiment == 'A' ? 1 : 2;
            split.name += kard.experiment == 'A' ? " (train=first repetition)"
                                                 : " (train=first two repetitions)";
            // Rank repetitions within each (subject, action) group so the rule
            // works for any repetition numbering, not just 1..3.
            std::map<std::pair<int, int>, std::vector<int>> reps;
            for (const auto& s : sequences) {
                require_action(s);
                if (!in_actions(s.action_id)) continue;
                require_subject(s);
                if (s.repetition < 1)
                    throw MissingMetadataError("sequence " + sequence_id(s) +
                                               " lacks a repetition number");
                reps[{s.subject_id, s.action_id}].push_back(s.repetition);
            }
            for (auto& [key, list] : reps) std::sort(list.begin(), list.end());
            for (const auto& s : sequences) {
                if (!in_actions(s.action_id)) continue;
                const auto& list = reps[{s.subject_id, s.action_id}];
                const auto rank = std::lower_bound(list.begin(), list.end(), s.repetition) -
                                  list.begin();
                (rank < reps_training ? split.train : split.test).push_back(sequence_id(s));
            }
        }
    } else if (protocol == "ntu-xsub") {
        split.name += " (train=20 listed subjects)";
        for (const auto& s : sequences) {
            require_subject(s);
            (kNtuTrainSubjects.count(s.subject_id) ? split.train : split.test)
                .push_back(sequence_id(s));
        }
    } else if (protocol == "ntu-xview") {
        split.name += " (train=cameras 2,3)";
        for (const auto& s : sequences) {
            if (s.camera_id < 1)
                throw MissingMetadataError("sequence " + sequence_id(s) +
                                           " lacks the camera id the cross-view split needs");
            (s.camera_id == 2 || s.camera_id == 3 ? split.train : split.test)
                .push_back(sequence_id(s));
        }
    }

    std::sort(split.train.begin(), split.train.end());
    std::sort(split.test.begin(), split.test.end());
    return split;
}

int LabelMap::label_of(int action_id) const {
    auto it = std::lower_bound(actions.begin(), actions.end(), action_id);
    if (it == actions.end() || *it != action_id)
        throw LabelRangeError("action " + std::to_string(action_id) +
                              " is not part of this label map");
    return static_cast<int>(it - actions.begin());
}

int LabelMap::action_of(int label) const {
    if (label < 0 || label >= num_classes())
        throw LabelRangeError("label " + std::to_string(label) + " outside [0, " +
                              std::to_string(num_classes()) + ")");
    return actions[static_cast<std::size_t>(label)];
}

LabelMap make_label_map(const std::vector<SkeletonSequence>& sequences,
                        const std::string& protocol) {
    LabelMap map;
    map.actions = protocol_actions(protocol);
    if (map.actions.empty()) {
        std::set<int> seen;
        for (const auto& s : sequences) {
            require_action(s);
            seen.insert(s.action_id);
        }
        map.actions.assign(seen.begin(), seen.end());
    }
    return map;
}

}  // namespace skelres
