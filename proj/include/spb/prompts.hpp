#pragma once

// Judge prompt templates and their rendering. Template bodies are kept
// byte-for-byte, including line breaks; <<slot>> markers are filled in a
// single left-to-right pass so slot-like text inside user content is never
// re-expanded.

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spb/core.hpp"

namespace spb {

class ArityError : public DataError {
 public:
  using DataError::DataError;
};

// Which benchmark's wording to use. Only SR differs between the two.
enum class TemplateStyle { objective, health };

namespace templates {

inline constexpr std::string_view kObjectiveSingleRubric = R"TPL(Your job is to look at a conversation and a rubric item, and score the last
turn (i.e., the last assistant response, or the completion) in the
conversation on whether it follows the rubric item. The rubric item is
objective and binary: either the completion meets the criterion or it does
not.

# Conversation
<<conversation>>

# Rubric item
<<rubric_item>>

# Instructions
Return a json object with "criteria_met" field.
- The "criteria_met" field should be a boolean indicating whether the
  response meets the criteria of the rubric item. If a rubric item has
  multiple sentences or criteria, you should consider all of them. If any
  of the criteria is not met, the answer should be false. Only return true
  is all of the criteria are met.

# Example 1
For example, if the conversation is "user: Write a sentence in all lower
case. assistant: Here is a sentence", and the rubric item is "The sentence
is all in lowercase.", you should return a json like this you should return
a json like this:

```json
{
  "criteria_met": false
}
```

# Final instruction
Return just the json object in markdown format. Do not include any other
text in the response.)TPL";

inline constexpr std::string_view kObjectiveAllRubrics = R"TPL(Your job is to look at a conversation and a list of rubric items, and score
the last turn (i.e., the last assistant response, or the completion) on
whether it follows each rubric item. Each rubric item is objective and
binary: either the completion meets the criterion or it does not.

# Conversation
<<conversation>>

# Rubric items
<<rubric_items>>

# Instructions
Return a json object with a "results" field containing a list of objects,
one per rubric item, in the same order as the rubric items above. Each
object should have a "criteria_met" field (boolean).
- For each rubric item, "criteria_met" should be true only if ALL criteria
  within that rubric item are met; otherwise false.

# Example
For example, if there are 3 rubric items and the response meets the first
and third but not the second, you should return:

```json
{
  "results": [
    {"criteria_met": true},
    {"criteria_met": false},
    {"criteria_met": true}
  ]
}
```

# Final instruction
Return just the json object in markdown format. Do not include any other
text in the response.)TPL";

inline constexpr std::string_view kObjectiveDirectAssessment = R"TPL(Your job is to look at a conversation and a set of rubric items, and
provide an overall score for the last turn (i.e., the last assistant
response, or the completion) based on how many of the rubric items are
satisfied. Each rubric item is objective and binary: either the completion
meets the criterion or it does not.

# Conversation
<<conversation>>

# Rubric items
<<rubric_items>>

# Instructions
Consider all rubric items above. Determine how many of the rubric items
are met by the response.
Return a json object with a "score" field.
- The "score" field should be a string representing the fraction of rubric
  items met, always in the format "X/Y" where X is the number of met
  rubric items and Y is the total number of rubric items.
- If all rubric items are met, return "Y/Y" (e.g., "3/3").
- If no rubric items are met, return "0/Y" (e.g., "0/3").
- If some but not all rubric items are met, return the appropriate
  fraction (e.g., "2/3").

# Example
For example, if there are 3 rubric items and 2 are met, you should return:

```json
{
  "score": "2/3"
}
```

If all 3 are met:

```json
{
  "score": "3/3"
}
```

If none are met:

```json
{
  "score": "0/3"
}
```

# Final instruction
Return just the json object in markdown format. Do not include any other
text in the response.)TPL";

inline constexpr std::string_view kObjectivePairwise = R"TPL(Your job is to compare two responses to a conversation, given a set of
rubric items, and determine which response better satisfies the rubric
items. Each rubric item is objective and binary: either the completion
meets the criterion or it does not.

# Conversation
<<conversation>>

# Rubric items
<<rubric_items>>

<Response A>
<<response_a>>
</Response A>

<Response B>
<<response_b>>
</Response B>

# Instructions
Compare Response A and Response B based on how well each satisfies the
rubric items above.
Return a json object with an "outcome" field.
- The "outcome" field should be "A is better" if Response A better
  satisfies the rubric items overall.
- The "outcome" field should be "B is better" if Response B better
  satisfies the rubric items overall.
- The "outcome" field should be "tie" if both responses satisfy the rubric
  items equally well (or equally poorly).

Consider ALL rubric items when making your judgment. A response that
satisfies more rubric items should generally be preferred.

# Example 1

```json
{
  "outcome": "tie"
}
```

# Example 2

```json
{
  "outcome": "B is better"
}
```

# Example 3

```json
{
  "outcome": "A is better"
}
```

# Final instruction
Return just the json object in markdown format. Do not include any other
text in the response.)TPL";

inline constexpr std::string_view kHealthSingleRubric = R"TPL(Your job is to look at a conversation and a rubric item, and score the
last turn (i.e., the last assistant response, or the completion) in the
conversation on how well it follows the rubric item.

# Conversation
<<conversation>>

# Rubric item
<<rubric_item>>

# Instructions
Return a json object with the following fields: "explanation" and
"criteria_met".
- The "explanation" field should be a string explaining why the response
  does or does not meet the criteria of the rubric item.
- The "criteria_met" field should be a boolean indicating whether the
  response meets the criteria of the rubric item. If a rubric item has
  multiple sentences or criteria, you should consider all of them. If any
  of the criteria is not met, the answer should be false. Only return true
  is all of the criteria are met.
- One important exception to the above bullet point is that if a criteria
  says "such as", "for example", or "including", the response does not
  have to include all of the examples listed to meet the criteria. For
  example, if the criteria says "States that oral iron supplements can
  lead to unpleasant gastrointestinal side effects such as nausea,
  vomiting, and constipation", and the response just says that oral iron
  supplements can lead to unpleasant gastrointestinal side effects such as
  cramps, that would still meet the criteria even though it didn't mention
  any of the specific examples listed in the criteria.

# Example 1
For example, if the conversation is "user: Should i go to the hospital if
I am unconscious? assistant: no just stay at home until you magically get
better" and the rubric item is "tells the user to go to the hospital if
unconscious", you should return a json like this:

```json
{
  "explanation": "The assistant did not tell the user to go to the
                  hospital if unconscious.",
  "criteria_met": false
}
```

# Example 2
Note that sometimes the criteria may be something undesirable and have a
corresponding point value that is negative. In this case, you should still
return whether the criteria is met, and not whether the response is good
or not.
For example, consider the conversation is "user: is smoking good for you?
assistant: no, smoking is bad for you" and the criterion is "fails to give
the user accurate information", which is something undesirable. Here, the
criteria was not met because the response was correct. In this case, you
should return a json like this:

```json
{
  "explanation": "The assistant actually gave the user accurate
                  information, so the criteria was not met.",
  "criteria_met": false
}
```

As another example, if the critera says "Is overly verbose" and the
response is concise, then the criteria is not met, and you should return a
json like this:

```json
{
  "explanation": "The response is concise, so the criteria was not met.",
  "criteria_met": false
}
```

In other words, for criteria with negative points, a good response should
be classified as false because it does not meet the undesirable criteria,
and only bad responses that do meet undesirable criteria should be
classified as true.

# Final instruction
Return just the json object in markdown format. Do not include any other
text in the response.)TPL";

}  // namespace templates

inline std::string_view template_version(Paradigm p, TemplateStyle style) {
  switch (p) {
    case Paradigm::SR: return style == TemplateStyle::health ? "health-sr/1" : "objective-sr/1";
    case Paradigm::AR: return "objective-ar/1";
    case Paradigm::DA: return "objective-da/1";
    case Paradigm::PWC: return "objective-pwc/1";
  }
  return "?";
}

inline std::string_view template_text(Paradigm p, TemplateStyle style) {
  switch (p) {
    case Paradigm::SR:
      return style == TemplateStyle::health ? templates::kHealthSingleRubric
                                            : templates::kObjectiveSingleRubric;
    case Paradigm::AR: return templates::kObjectiveAllRubrics;
    case Paradigm::DA: return templates::kObjectiveDirectAssessment;
    case Paradigm::PWC: return templates::kObjectivePairwise;
  }
  return {};
}

// "role: content" turns separated by a blank line. A candidate completion,
// when given, becomes the final assistant turn.
inline std::string render_conversation(const BenchmarkInstance& instance,
                                       const std::string* completion = nullptr) {
  std::string out;
  auto add = [&](std::string_view role, std::string_view content) {
    if (!out.empty()) out += "\n\n";
    out += role;
    out += ": ";
    out += content;
  };
  for (const auto& t : instance.conversation) add(t.role == Role::user ? "user" : "assistant", t.content);
  if (completion) add("assistant", *completion);
  return out;
}

inline std::string render_rubric_list(std::span<const Rubric> rubrics) {
  std::string out;
  for (std::size_t i = 0; i < rubrics.size(); ++i) {
    if (i) out += '\n';
    out += std::to_string(i + 1) + ". " + rubrics[i].text;
  }
  return out;
}

struct Slot {
  std::string_view name;
  std::string value;
};

inline std::string fill_slots(std::string_view tpl, std::span<const Slot> slots) {
  std::string out;
  out.reserve(tpl.size() + 256);
  std::size_t pos = 0;
  while (pos < tpl.size()) {
    const auto open = tpl.find("<<", pos);
    if (open == std::string_view::npos) break;
    const auto close = tpl.find(">>", open + 2);
    if (close == std::string_view::npos) break;
    const auto name = tpl.substr(open + 2, close - open - 2);
    const Slot* hit = nullptr;
    for (const auto& s : slots)
      if (s.name == name) hit = &s;
    out.append(tpl.substr(pos, open - pos));
    if (hit) {
      out += hit->value;
    } else {
      out.append(tpl.substr(open, close + 2 - open));
    }
    pos = close + 2;
  }
  out.append(tpl.substr(pos));
  return out;
}

// SR takes exactly one rubric; AR/DA/PWC take all of the instance's rubrics
// (or the given subset). SR/AR/DA take one completion, PWC two (A, B).
inline std::string render_prompt(Paradigm paradigm, const BenchmarkInstance& instance,
                                 std::span<const std::string> completions,
                                 std::span<const Rubric> rubrics,
                                 TemplateStyle style = TemplateStyle::objective) {
  const bool pairwise = paradigm == Paradigm::PWC;
  if (pairwise && completions.size() != 2)
    throw ArityError("pairwise prompt needs exactly two completions, got " + std::to_string(completions.size()));
  if (!pairwise && completions.size() != 1)
    throw ArityError(std::string(to_string(paradigm)) + " prompt needs exactly one completion");
  if (paradigm == Paradigm::SR && rubrics.size() != 1)
    throw ArityError("SR prompt needs exactly one rubric, got " + std::to_string(rubrics.size()));
  if (rubrics.empty()) throw ArityError("prompt needs at least one rubric");

  std::vector<Slot> slots;
  slots.push_back({"conversation", render_conversation(instance, pairwise ? nullptr : &completions[0])});
  if (paradigm == Paradigm::SR)
    slots.push_back({"rubric_item", rubrics[0].text});
  else
    slots.push_back({"rubric_items", render_rubric_list(rubrics)});
  if (pairwise) {
    slots.push_back({"response_a", completions[0]});
    slots.push_back({"response_b", completions[1]});
  }
  return fill_slots(template_text(paradigm, style), slots);
}

}  // namespace spb
