//! The benchmark programs shipped with the repository.

use minilang::{parse_source, parse_tests, SourceUnit, TestCase};

#[derive(Debug, Clone, Copy)]
pub struct Benchmark {
    pub name: &'static str,
    pub source: &'static str,
    pub tests: &'static str,
}

pub const BENCHMARKS: [Benchmark; 3] = [
    Benchmark {
        name: "bench_sort",
        source: include_str!("../../../benchmarks/bench_sort.ml"),
        tests: include_str!("../../../benchmarks/bench_sort.tests"),
    },
    Benchmark {
        name: "bench_sum",
        source: include_str!("../../../benchmarks/bench_sum.ml"),
        tests: include_str!("../../../benchmarks/bench_sum.tests"),
    },
    Benchmark {
        name: "bench_stats",
        source: include_str!("../../../benchmarks/bench_stats.ml"),
        tests: include_str!("../../../benchmarks/bench_stats.tests"),
    },
];

impl Benchmark {
    pub fn get(name: &str) -> Option<Benchmark> {
        BENCHMARKS.iter().copied().find(|b| b.name == name)
    }

    pub fn unit(&self) -> SourceUnit {
        parse_source(self.name, self.source).expect("shipped benchmark parses")
    }

    pub fn test_cases(&self) -> Vec<TestCase> {
        parse_tests(self.tests).expect("shipped tests parse")
    }
}
