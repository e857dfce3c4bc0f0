#include "blum/vocab.hpp"

#include <fstream>
#include <stdexcept>

namespace blum::logdata {

BehaviorVocab BehaviorVocab::build(const std::vector<std::string>& behavior_names) {
    if (behavior_names.empty()) throw std::invalid_argument("build_vocab: empty vocabulary");
    BehaviorVocab v;
    v.names_ = behavior_names;
    v.index_.reserve(behavior_names.size());
    for (std::size_t i = 0; i < behavior_names.size(); ++i) {
        const auto& name = behavior_names[i];
        if (name.empty()) throw std::invalid_argument("build_vocab: empty behavior name at index " + std::to_string(i));
        auto [it, inserted] = v.index_.emplace(name, static_cast<int>(i));
        if (!inserted) throw std::invalid_argument("build_vocab: duplicate behavior name '" + name + "'");
    }
    return v;
}

const std::string& BehaviorVocab::name(int id) const {
    static const std::string kPad = "<PAD>";
    static const std::string kMask = "<MASK>";
    static const std::string kUnk = "<UNK>";
    if (id >= 0 && id < num_behaviors()) return names_[static_cast<std::size_t>(id)];
    if (id == pad_id()) return kPad;
    if (id == mask_id()) return kMask;
    if (id == unk_id()) return kUnk;
    throw std::out_of_range("BehaviorVocab::name: id " + std::to_string(id) + " out of range");
}

int BehaviorVocab::id_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("BehaviorVocab::id_of: unknown behavior '" + name + "'");
    return it->second;
}

int BehaviorVocab::id_or_unk(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? unk_id() : it->second;
}

void BehaviorVocab::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write vocab file: " + path);
    for (const auto& n : names_) out << n << '\n';
}

BehaviorVocab BehaviorVocab::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read vocab file: " + path);
    std::vector<std::string> names;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) names.push_back(line);
    }
    return build(names);
}

std::vector<std::string> make_behavior_names(int count) {
    static const char* verbs[] = {"send", "view", "open",  "close", "swipe", "tap",
                                  "watch", "post", "reply", "like",  "share", "search"};
    static const char* objects[] = {"chat", "snap", "story", "video", "map", "filter", "profile", "ad", "feed",
                                    "camera"};
    std::vector<std::string> names;
    names.reserve(static_cast<std::size_t>(count));
    for (const char* o : objects) {
        for (const char* v : verbs) {
            if (static_cast<int>(names.size()) >= count) return names;
            names.push_back(std::string(v) + "_" + o);
        }
    }
    int k = 0;
    while (static_cast<int>(names.size()) < count) names.push_back("behavior_" + std::to_string(k++));
    return names;
}

}  // namespace blum::logdata
