#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "blum/vocab.hpp"

namespace blum::logdata {

// One user's time-ordered behavior ids with day-granularity timestamps.
struct BehaviorSequence {
    std::string user_id;
    std::vector<std::int32_t> tokens;
    std::vector<std::int32_t> timestamps;

    int length() const { return static_cast<int>(tokens.size()); }

    // tokens non-empty, ids valid and never PAD/MASK, timestamps aligned
    // and non-decreasing. Throws on violation.
    void validate(const BehaviorVocab& vocab) const;

    BehaviorSequence window(int begin, int end) const;
};

enum class Task { reported, ad_view, self_delete };

const char* task_name(Task t);
Task parse_task(const std::string& name);  // throws on unknown task
constexpr int kNumTasks = 3;
constexpr int kMaxGapDays = 7;

struct LabelRecord {
    std::string user_id;
    Task task = Task::reported;
    int gap_days = 0;
    int label = 0;

    void validate() const;
};

// ---- on-disk corpus formats: one JSON object per line ----

void save_corpus(const std::string& path, const std::vector<BehaviorSequence>& sequences);
std::vector<BehaviorSequence> load_corpus(const std::string& path);

// Streaming visitor; never materializes more than one record.
void for_each_sequence(const std::string& path, const std::function<void(BehaviorSequence&&)>& fn);
std::size_t count_sequences(const std::string& path);

void save_labels(const std::string& path, const std::vector<LabelRecord>& labels);
std::vector<LabelRecord> load_labels(const std::string& path);

}  // namespace blum::logdata
