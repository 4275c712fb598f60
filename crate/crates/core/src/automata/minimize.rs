//! Hopcroft partition refinement.

use super::Dfa;

pub(super) fn hopcroft(dfa: &Dfa) -> Dfa {
    let trimmed = dfa.canonical();
    let n = trimmed.num_states();
    let k = trimmed.alphabet.len();

    // inverse[a][q] = states p with p --a--> q
    let mut inverse = vec![vec![Vec::new(); n]; k];
    for p in 0..n {
        for a in 0..k {
            inverse[a][trimmed.transitions[p][a]].push(p);
        }
    }

    let (acc, rej): (Vec<usize>, Vec<usize>) = (0..n).partition(|&q| trimmed.accepting[q]);
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    let mut block_of = vec![0usize; n];
    for part in [acc, rej] {
        if !part.is_empty() {
            for &q in &part {
                block_of[q] = blocks.len();
            }
            blocks.push(part);
        }
    }

    let mut in_work = vec![false; blocks.len()];
    let mut work = Vec::new();
    if blocks.len() == 2 {
        let smaller = if blocks[0].len() <= blocks[1].len() { 0 } else { 1 };
        work.push(smaller);
        in_work[smaller] = true;
    }

    let mut marked = vec![false; n];
    while let Some(splitter) = work.pop() {
        in_work[splitter] = false;
        let members = blocks[splitter].clone();
        for a in 0..k {
            let preimage: Vec<usize> = members
                .iter()
                .flat_map(|&q| inverse[a][q].iter().copied())
                .collect();
            if preimage.is_empty() {
                continue;
            }
            let mut touched = Vec::new();
            for &p in &preimage {
                if !marked[p] {
                    marked[p] = true;
                    let b = block_of[p];
                    if !touched.contains(&b) {
                        touched.push(b);
                    }
                }
            }
            for b in touched {
                let (inside, outside): (Vec<usize>, Vec<usize>) =
                    blocks[b].iter().partition(|&&q| marked[q]);
                if outside.is_empty() {
                    continue;
                }
                let new_id = blocks.len();
                for &q in &outside {
                    block_of[q] = new_id;
                }
                let inside_len = inside.len();
                let outside_len = outside.len();
                blocks[b] = inside;
                blocks.push(outside);
                in_work.push(false);
                if in_work[b] {
                    work.push(new_id);
                    in_work[new_id] = true;
                } else {
                    let pick = if inside_len <= outside_len { b } else { new_id };
                    work.push(pick);
                    in_work[pick] = true;
                }
            }
            for &p in &preimage {
                marked[p] = false;
            }
        }
    }

    let transitions = blocks
        .iter()
        .map(|block| {
            let rep = block[0];
            (0..k)
                .map(|a| block_of[trimmed.transitions[rep][a]])
                .collect()
        })
        .collect();
    let accepting = blocks.iter().map(|b| trimmed.accepting[b[0]]).collect();
    Dfa {
        alphabet: trimmed.alphabet.clone(),
        transitions,
        start: block_of[trimmed.start],
        accepting,
    }
    .canonical()
}
