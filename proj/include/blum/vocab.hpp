#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace blum::logdata {

// Bidirectional map between behavior names and contiguous integer ids.
// Behavior ids occupy 0..num_behaviors()-1; PAD, MASK and UNK follow.
class BehaviorVocab {
public:
    static BehaviorVocab build(const std::vector<std::string>& behavior_names);

    int num_behaviors() const { return static_cast<int>(names_.size()); }
    int total_size() const { return num_behaviors() + 3; }

    int pad_id() const { return num_behaviors(); }
    int mask_id() const { return num_behaviors() + 1; }
    int unk_id() const { return num_behaviors() + 2; }

    bool is_special(int id) const { return id >= num_behaviors() && id < total_size(); }

    // Name for any id, specials included.
    const std::string& name(int id) const;

    // Throws for unknown names.
    int id_of(const std::string& name) const;
    // UNK for unknown names.
    int id_or_unk(const std::string& name) const;

    const std::vector<std::string>& behavior_names() const { return names_; }

    void save(const std::string& path) const;
    static BehaviorVocab load(const std::string& path);

private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, int> index_;
};

// Plausible event names for synthetic logs ("send_chat", "view_story", ...).
std::vector<std::string> make_behavior_names(int count);

}  // namespace blum::logdata
