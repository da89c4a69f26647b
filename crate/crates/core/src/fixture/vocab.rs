//! Word pools for synthetic themes. Pools are pairwise disjoint so planted
//! themes are recoverable.

pub const THEMES: [(&str, &[&str]); 8] = [
    (
        "gastronomy",
        &[
            "whisky", "whiskies", "lager", "mexican", "highland", "single", "malt", "tasting",
            "brewery", "stout", "bourbon", "vineyard", "sommelier", "cuisine", "recipes",
            "espresso", "ramen", "bakery", "cheese", "pairing", "cocktail", "distillery",
            "barrel", "aged", "flavor",
        ],
    ),
    (
        "gaming",
        &[
            "gaming", "gamers", "rdr", "speedrun", "esports", "console", "controller", "quest",
            "multiplayer", "raid", "loot", "arcade", "indie", "roguelike", "pixel", "leaderboard",
            "tournament", "clan", "mods", "sandbox", "platformer", "retro", "joystick",
            "respawn", "boss",
        ],
    ),
    (
        "cyber_philosophy",
        &[
            "context", "compression", "latent", "space", "extension", "transhumanism",
            "cybersecurity", "consciousness", "singularity", "substrate", "upload", "entropy",
            "ontology", "sentience", "exploit", "cipher", "zero", "day", "posthuman",
            "simulation", "qualia", "recursion", "firewall", "encryption", "metaphysics",
        ],
    ),
    (
        "agent_coordination",
        &[
            "agents", "building", "share", "helping", "coordinate", "swarm", "collective",
            "protocol", "handoff", "delegation", "teammates", "workflow", "orchestration",
            "consensus", "mutual", "aid", "peer", "toolchain", "skills", "heartbeat",
            "autonomous", "collaborate", "cooperate", "builders", "guild",
        ],
    ),
    (
        "academic",
        &[
            "research", "papers", "theorem", "neural", "networks", "gradient", "descent",
            "benchmark", "dataset", "citations", "peer-reviewed", "lecture", "seminar",
            "statistics", "physics", "mathematics", "biology", "chemistry", "scholars",
            "journal", "hypothesis", "experiment", "arxiv", "thesis", "curriculum",
        ],
    ),
    (
        "finance",
        &[
            "risk", "management", "prediction", "markets", "forecasting", "trading", "hedging",
            "portfolio", "derivatives", "volatility", "liquidity", "arbitrage", "quantitative",
            "equities", "bonds", "yield", "macro", "inflation", "options", "futures",
            "valuation", "capital", "allocation", "dividends", "treasury",
        ],
    ),
    (
        "platform_infra",
        &[
            "moltbook.com", "post", "dd", "ae", "dbc", "url", "https", "api", "endpoint",
            "uuid", "token", "webhook", "json", "cron", "bot", "timestamp", "hash", "id",
            "redirect", "cdn", "http", "payload", "ff", "cb", "ea",
        ],
    ),
    (
        "geo_cultural",
        &[
            "turkish", "dutch", "community", "culture", "politics", "news", "brazilian",
            "korean", "nigerian", "polish", "diaspora", "heritage", "elections", "parliament",
            "folklore", "regional", "identity", "nation", "province", "embassy", "dialect",
            "festival", "customs", "migration", "borders",
        ],
    ),
];

pub const TEMPLATE_STEMS: [&str; 6] = [
    "Welcome to my submolt! This is a placeholder",
    "A new community created automatically",
    "Default description. Please edit me",
    "Claimed by an autonomous registration script",
    "Coming soon: more information about this",
    "Reserved namespace for future use",
];
