#include "blum/corpus.hpp"

#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace blum::logdata {

using nlohmann::json;

void BehaviorSequence::validate(const BehaviorVocab& vocab) const {
    if (tokens.empty()) throw std::invalid_argument("sequence " + user_id + ": empty token list");
    if (timestamps.size() != tokens.size())
        throw std::invalid_argument("sequence " + user_id + ": timestamps/tokens length mismatch");
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const auto t = tokens[i];
        if (t < 0 || t >= vocab.total_size())
            throw std::invalid_argument("sequence " + user_id + ": token id out of range at position " +
                                        std::to_string(i));
        if (t == vocab.pad_id() || t == vocab.mask_id())
            throw std::invalid_argument("sequence " + user_id + ": PAD/MASK not allowed in stored sequences");
        if (i > 0 && timestamps[i] < timestamps[i - 1])
            throw std::invalid_argument("sequence " + user_id + ": timestamps decrease at position " +
                                        std::to_string(i));
    }
}

BehaviorSequence BehaviorSequence::window(int begin, int end) const {
    BehaviorSequence w;
    w.user_id = user_id;
    w.tokens.assign(tokens.begin() + begin, tokens.begin() + end);
    w.timestamps.assign(timestamps.begin() + begin, timestamps.begin() + end);
    return w;
}

const char* task_name(Task t) {
    switch (t) {
        case Task::reported: return "reported";
        case Task::ad_view: return "ad_view";
        case Task::self_delete: return "self_delete";
    }
    return "?";
}

Task parse_task(const std::string& name) {
    if (name == "reported") return Task::reported;
    if (name == "ad_view") return Task::ad_view;
    if (name == "self_delete") return Task::self_delete;
    throw std::invalid_argument("unknown task name '" + name + "'");
}

void LabelRecord::validate() const {
    if (gap_days < 0 || gap_days > kMaxGapDays)
        throw std::invalid_argument("label for " + user_id + ": gap_days out of [0, 7]");
    if (label != 0 && label != 1) throw std::invalid_argument("label for " + user_id + ": label not binary");
}

// ---- line-delimited JSON ----

namespace {

json sequence_to_json(const BehaviorSequence& s) {
    return json{{"user_id", s.user_id}, {"tokens", s.tokens}, {"timestamps", s.timestamps}};
}

BehaviorSequence sequence_from_json(const json& j) {
    BehaviorSequence s;
    s.user_id = j.at("user_id").get<std::string>();
    s.tokens = j.at("tokens").get<std::vector<std::int32_t>>();
    s.timestamps = j.at("timestamps").get<std::vector<std::int32_t>>();
    return s;
}

[[noreturn]] void bad_line(const std::string& path, std::size_t line_no, const std::string& why) {
    throw std::runtime_error(path + ":" + std::to_string(line_no) + ": malformed record (" + why + ")");
}

}  // namespace

void save_corpus(const std::string& path, const std::vector<BehaviorSequence>& sequences) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write corpus file: " + path);
    for (const auto& s : sequences) out << sequence_to_json(s).dump() << '\n';
    if (!out) throw std::runtime_error("write failed: " + path);
}

void for_each_sequence(const std::string& path, const std::function<void(BehaviorSequence&&)>& fn) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read corpus file: " + path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) bad_line(path, line_no, "invalid JSON");
        try {
            fn(sequence_from_json(j));
        } catch (const json::exception& e) {
            bad_line(path, line_no, e.what());
        }
    }
}

std::vector<BehaviorSequence> load_corpus(const std::string& path) {
    std::vector<BehaviorSequence> out;
    for_each_sequence(path, [&](BehaviorSequence&& s) { out.push_back(std::move(s)); });
    return out;
}

std::size_t count_sequences(const std::string& path) {
    std::size_t n = 0;
    for_each_sequence(path, [&](BehaviorSequence&&) { ++n; });
    return n;
}

void save_labels(const std::string& path, const std::vector<LabelRecord>& labels) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write labels file: " + path);
    for (const auto& l : labels) {
        out << json{{"user_id", l.user_id}, {"task", task_name(l.task)}, {"gap_days", l.gap_days}, {"label", l.label}}
                   .dump()
            << '\n';
    }
}

std::vector<LabelRecord> load_labels(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read labels file: " + path);
    std::vector<LabelRecord> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) bad_line(path, line_no, "invalid JSON");
        try {
            LabelRecord l;
            l.user_id = j.at("user_id").get<std::string>();
            l.task = parse_task(j.at("task").get<std::string>());
            l.gap_days = j.at("gap_days").get<int>();
            l.label = j.at("label").get<int>();
            l.validate();
            out.push_back(std::move(l));
        } catch (const json::exception& e) {
            bad_line(path, line_no, e.what());
        }
    }
    return out;
}

}  // namespace blum::logdata
