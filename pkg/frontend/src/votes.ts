// Votes CSV helpers mirroring the evaluation contract:
// header survey,rater,item,region,source,verdict with survey-scoped
// verdict domains.

export interface Vote {
  survey: "one" | "two";
  rater: string;
  item: string;
  region: string;
  source: string;
  verdict: string;
}

const HEADER = "survey,rater,item,region,source,verdict";
const DOMAINS: Record<string, string[]> = {
  one: ["both", "first", "second", "none"],
  two: ["none_needed", "small", "medium", "large"],
};

export function parseVotesCsv(text: string): Vote[] {
  const lines = text.trim().split(/\r?\n/);
  if (lines[0] !== HEADER) {
    throw new Error(`votes CSV must start with "${HEADER}"`);
  }
  const votes: Vote[] = [];
  for (const line of lines.slice(1)) {
    if (!line) continue;
    const parts = line.split(",");
    if (parts.length !== 6) throw new Error(`bad row: ${line}`);
    const [survey, rater, item, region, source, verdict] = parts;
    if (survey !== "one" && survey !== "two") {
      throw new Error(`unknown survey ${survey}`);
    }
    if (!DOMAINS[survey].includes(verdict)) {
      throw new Error(`verdict ${verdict} not in survey-${survey} domain`);
    }
    votes.push({ survey, rater, item, region, source, verdict });
  }
  if (votes.length === 0) throw new Error("no votes in CSV");
  return votes;
}
