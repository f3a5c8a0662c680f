#include "corpus.hpp"

namespace radixlm::detail {

// Fixed training text for the merge procedure. Changing a single byte here
// changes every vocabulary built from it.
const std::vector<std::string_view>& merge_corpus() {
  static const std::vector<std::string_view> passages = {
      "You are a helpful assistant. Answer the question of the user as well as you can.",
      "User: Hello! Assistant: Hi! How can I help you today?",
      "User: Can you summarize the following essay in one sentence? Assistant: Sure, here is a summary.",
      "{\"summary\": \"The essay is clear and well structured.\", \"grade\": \"A-\"}",
      "{\"name\": \"Alice\", \"job\": \"engineer\", \"age\": 34, \"city\": \"Paris\"}",
      "{\"summary\": \"The argument is weak and the evidence is thin.\", \"grade\": \"C+\"}",
      "Question: What is the capital of France? Answer: The capital of France is Paris.",
      "Question: Which planet is known as the red planet? Answer: Mars is known as the red planet.",
      "Question: What is the boiling point of water at sea level? Answer: It is one hundred degrees.",
      "The following are multiple choice questions about high school physics. Choose the best answer.",
      "Let us think step by step. First, we compute the total. Then we compare the two results.",
      "Evaluate the essay from the dimension of clarity, originality, and evidence. Give a judgment.",
      "The quick brown fox jumps over the lazy dog while the cat sleeps in the warm sun.",
      "In the beginning the system prompt is shared by every request, so its cache can be reused.",
      "name: Bob\njob: teacher\nage: 41\nname: Carol\njob: doctor\nage: 29\n",
      "Please extract the name, the job, and the age of the person described in the text below.",
      "She works as a software engineer at a small company and lives in the city with her family.",
      "The model generates one token at a time, and every token depends on all of the previous ones.",
      "Thought: the answer should be a number. Action: compute the sum. Observation: the sum is ten.",
      "Summarize the conversation so far and then continue the story with a surprising twist.",
      "There are four options, and only one of them is correct. The correct option is the second one.",
      "A radix tree stores sequences so that common prefixes are kept only once in memory.",
      "Write a short poem about the sea, the wind, and the stars that guide the sailors home.",
      "The image shows a dog playing in the park with a red ball on a sunny afternoon.",
      "{\"answer\": \"yes\", \"reason\": \"the evidence supports the claim\"}",
      "Thank you for the question. Here is the answer that you requested, with a short explanation.",
      "Step 1: read the problem. Step 2: write the equation. Step 3: solve it. Step 4: check it.",
      "The meeting is scheduled for Monday at ten in the morning in the main conference room.",
  };
  return passages;
}

}  // namespace radixlm::detail
