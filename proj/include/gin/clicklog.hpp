#pragma once

#include <cstdint>
#include <istream>
#include <set>
#include <string>
#include <vector>

namespace gin::clicklog {

struct ClickEvent {
  std::string user_id;
  std::int64_t timestamp = 0;  // unix seconds
  std::set<std::string> query_tokens;
  std::string item_id;
};

struct Session {
  std::string user_id;
  std::vector<ClickEvent> events;  // ascending timestamp
};

struct SessionConfig {
  double jaccard_threshold = 0.3;
  std::int64_t max_gap_seconds = 1800;
};

// Click-log TSV: `user_id <TAB> timestamp <TAB> query_text <TAB> item_id`.
// Lines starting with '#' and blank lines are skipped. Query text is
// lowercased and whitespace-tokenized into a set. Malformed lines raise
// DataError naming the 1-based line number.
std::vector<ClickEvent> parse_click_log(std::istream& in);

// |a ∩ b| / |a ∪ b|; both sets must be non-empty.
double query_similarity(const std::set<std::string>& a, const std::set<std::string>& b);

// Splits each user's time-ordered clicks into sessions. A new session
// starts when the query drifts below the similarity threshold or the time
// gap exceeds max_gap_seconds. Input must be sorted by (user_id, timestamp).
std::vector<Session> segment_sessions(const std::vector<ClickEvent>& events,
                                      const SessionConfig& cfg);

// Stable sort by (user_id, timestamp), the order segment_sessions expects.
void sort_events(std::vector<ClickEvent>& events);

// Keeps events with timestamp >= max(timestamp) - days*86400.
std::vector<ClickEvent> filter_max_age(const std::vector<ClickEvent>& events, int days);

}  // namespace gin::clicklog
