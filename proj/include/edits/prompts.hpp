#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "edits/core/error.hpp"

namespace edits::prompts {

inline std::string replace_all(std::string text, std::string_view from, std::string_view to) {
    std::size_t pos = 0;
    while ((pos = text.find(from, pos)) != std::string::npos) {
        text.replace(pos, from.size(), to);
        pos += to.size();
    }
    return text;
}

// The opening sentence and the "Follow this structure:" lead-in are the
// published caption prompt. Everything after "{CLASS}" in the first line and
// the numbered structure are a reconstruction of the elided remainder.
inline constexpr std::string_view kCaptionTemplate =
    "Generate an extremely detailed and vivid caption for this image {CLASS}, describing the subject, "
    "its pose and actions, its interactions with people or objects, and the surrounding scene.\n"
    "Follow this structure: "
    "1. Subject: identify the {CLASS} and its distinguishing visual attributes. "
    "2. Action and state: what the subject is doing and how it is positioned. "
    "3. Relations: interactions with people, animals or objects and any cause-and-effect. "
    "4. Context: setting, background, lighting and time cues. "
    "Write one fluent paragraph.";

inline std::string build_caption_prompt(std::string_view class_label) {
    return replace_all(std::string(kCaptionTemplate), "{CLASS}", class_label);
}

/// Neutralizes '#' and line breaks inside a caption so the only "##" section
/// markers in a summarization prompt are the template's own.
inline std::string escape_caption(std::string_view caption) {
    std::string out;
    out.reserve(caption.size());
    for (const char c : caption) {
        switch (c) {
            case '\\': out += "\\\\"; break;
            case '#': out += "\\#"; break;
            case '\n':
            case '\r': out += ' '; break;
            default: out += c;
        }
    }
    return out;
}

/// Summarization prompt for an awareness set. The count is substituted
/// literally, so one caption reads "1 texts".
inline std::string build_summarization_prompt(const std::vector<std::string>& captions, std::string_view class_label) {
    if (captions.empty()) throw Error(ErrorCode::empty_input, "summarization prompt needs at least one caption");
    std::string p = "Please analyze the following " + std::to_string(captions.size()) +
                    " texts and generate a high-quality representative prototype text.\n";
    p += "## Input Texts:\n";
    for (std::size_t i = 0; i < captions.size(); ++i)
        p += "[" + std::to_string(i + 1) + "] " + escape_caption(captions[i]) + "\n";
    p += "## Output Requirements:\n";
    p += "1. Extract semantic content directly related to label ";
    p += class_label;
    p += " in each text.\n";
    p += "2. Merge unique information and expressions from each text.\n";
    p += "3. Fluent language, accurate information and clear structure.\n";
    return p;
}

}  // namespace edits::prompts
