//! robots.txt parsing and matching.
//!
//! Groups are selected by the longest `User-agent` token contained in the
//! crawler's product name, falling back to `*`. Within a group the longest
//! matching pattern wins and `Allow` wins ties. Patterns support `*` and a
//! trailing `$`.

use std::time::Duration;

#[derive(Debug, Clone, PartialEq)]
struct Rule {
    allow: bool,
    pattern: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
struct Group {
    agents: Vec<String>,
    rules: Vec<Rule>,
    crawl_delay: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Robots {
    groups: Vec<Group>,
}

fn pattern_matches(pattern: &str, path: &str) -> bool {
    let (pattern, anchored) = match pattern.strip_suffix('$') {
        Some(p) => (p, true),
        None => (pattern, false),
    };
    let parts: Vec<&str> = pattern.split('*').collect();
    let mut pos = 0;
    for (i, part) in parts.iter().enumerate() {
        if i == 0 {
            if !path.starts_with(part) {
                return false;
            }
            pos = part.len();
            continue;
        }
        if i == parts.len() - 1 && anchored {
            return path.len() >= pos + part.len() && path.ends_with(part);
        }
        match path[pos..].find(part) {
            Some(at) => pos += at + part.len(),
            None => return false,
        }
    }
    !anchored || pos == path.len()
}

/// Product token of a user-agent string: `"campus-rag/0.1 (+url)"` -> `"campus-rag"`.
fn product_token(user_agent: &str) -> String {
    user_agent.split(['/', ' ']).next().unwrap_or("").to_lowercase()
}

impl Robots {
    pub fn allow_all() -> Self {
        Robots::default()
    }

    pub fn parse(text: &str) -> Self {
        let mut groups: Vec<Group> = Vec::new();
        let mut current: Option<Group> = None;
        let mut in_agents = false;
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            let Some((key, value)) = line.split_once(':') else { continue };
            let key = key.trim().to_ascii_lowercase();
            let value = value.trim();
            match key.as_str() {
                "user-agent" => {
                    if !in_agents {
                        if let Some(g) = current.take() {
                            groups.push(g);
                        }
                        current = Some(Group::default());
                    }
                    in_agents = true;
                    if let Some(g) = current.as_mut() {
                        g.agents.push(value.to_lowercase());
                    }
                }
                "allow" | "disallow" => {
                    in_agents = false;
                    let Some(g) = current.as_mut() else { continue };
                    // an empty Disallow allows everything; it adds no rule
                    if value.is_empty() {
                        continue;
                    }
                    g.rules.push(Rule { allow: key == "allow", pattern: value.to_string() });
                }
                "crawl-delay" => {
                    in_agents = false;
                    if let (Some(g), Ok(d)) = (current.as_mut(), value.parse::<f64>()) {
                        if d.is_finite() && d >= 0.0 {
                            g.crawl_delay = Some(d);
                        }
                    }
                }
                _ => {}
            }
        }
        if let Some(g) = current {
            groups.push(g);
        }
        Robots { groups }
    }

    /// Groups that apply to `user_agent`: every group naming the most
    /// specific matching token, else every `*` group.
    fn groups_for(&self, user_agent: &str) -> Vec<&Group> {
        let token = product_token(user_agent);
        let best = self
            .groups
            .iter()
            .flat_map(|g| g.agents.iter())
            .filter(|a| a.as_str() != "*" && !a.is_empty() && token.contains(a.as_str()))
            .map(|a| a.len())
            .max();
        match best {
            Some(len) => self
                .groups
                .iter()
                .filter(|g| g.agents.iter().any(|a| a.len() == len && a != "*" && token.contains(a.as_str())))
                .collect(),
            None => self.groups.iter().filter(|g| g.agents.iter().any(|a| a == "*")).collect(),
        }
    }

    /// `path` is the URL path plus query, e.g. `/search?q=x`.
    pub fn is_allowed(&self, user_agent: &str, path: &str) -> bool {
        let mut best: Option<(usize, bool)> = None;
        for g in self.groups_for(user_agent) {
            for r in &g.rules {
                if !pattern_matches(&r.pattern, path) {
                    continue;
                }
                let len = r.pattern.len();
                best = match best {
                    Some((l, a)) if l > len || (l == len && a) => Some((l, a)),
                    _ => Some((len, r.allow)),
                };
            }
        }
        best.map(|(_, allow)| allow).unwrap_or(true)
    }

    pub fn crawl_delay(&self, user_agent: &str) -> Option<Duration> {
        self.groups_for(user_agent)
            .iter()
            .filter_map(|g| g.crawl_delay)
            .reduce(f64::max)
            .map(Duration::from_secs_f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const UA: &str = "campus-rag/0.1";

    #[test]
    fn star_group_disallow() {
        let r = Robots::parse("User-agent: *\nDisallow: /private/\n");
        assert!(!r.is_allowed(UA, "/private/x.html"));
        assert!(r.is_allowed(UA, "/public.html"));
    }

    #[test]
    fn specific_group_overrides_star() {
        let r = Robots::parse("User-agent: *\nDisallow: /\n\nUser-agent: campus-rag\nDisallow: /tmp\n");
        assert!(r.is_allowed(UA, "/index.html"));
        assert!(!r.is_allowed(UA, "/tmp/a"));
        assert!(!r.is_allowed("otherbot/1.0", "/index.html"));
    }

    #[test]
    fn longest_match_and_allow_ties() {
        let r = Robots::parse("User-agent: *\nDisallow: /a\nAllow: /a/b\nDisallow: /x\nAllow: /x\n");
        assert!(!r.is_allowed(UA, "/a/c"));
        assert!(r.is_allowed(UA, "/a/b/c"));
        assert!(r.is_allowed(UA, "/x"));
    }

    #[test]
    fn wildcards_and_anchor() {
        let r = Robots::parse("User-agent: *\nDisallow: /*.pdf$\nDisallow: /*?session=\n");
        assert!(!r.is_allowed(UA, "/docs/a.pdf"));
        assert!(r.is_allowed(UA, "/docs/a.pdf.html"));
        assert!(!r.is_allowed(UA, "/p?session=1"));
        assert!(r.is_allowed(UA, "/p?x=1"));
    }

    #[test]
    fn empty_disallow_and_comments() {
        let r = Robots::parse("# hi\nUser-agent: * # all\nDisallow:\n");
        assert!(r.is_allowed(UA, "/anything"));
        assert!(Robots::parse("").is_allowed(UA, "/"));
    }

    #[test]
    fn grouped_agents_share_rules() {
        let r = Robots::parse("User-agent: a\nUser-agent: campus-rag\nDisallow: /no\nCrawl-delay: 2\n");
        assert!(!r.is_allowed(UA, "/no"));
        assert_eq!(r.crawl_delay(UA), Some(Duration::from_secs(2)));
    }
}
