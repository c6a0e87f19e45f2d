use lob_core::book::BookState;
use lob_core::flow::IntensityModel;
use lob_core::mc::{estimate_first_move, MoveRef};

fn origin(z1: i64, z2: i64) -> BookState {
    BookState::new(vec![2, 4, z1, 0, 0, 0], vec![0, 0, 0, z2, 4, 2]).unwrap()
}

fn main() {
    let model = IntensityModel::model_b_calibrated(300);
    for seed in 1u64..=24 {
        let mut grid = [[0.0f64; 6]; 6];
        for z1 in 1..=6usize {
            for z2 in 1..=6usize {
                let rep =
                    estimate_first_move(&model, &origin(z1 as i64, z2 as i64), 500, seed, MoveRef::Ask, 1_000_000)
                        .unwrap();
                grid[z2 - 1][z1 - 1] = rep.estimate.mean;
            }
        }
        let mut ok = 0;
        for a in 0..6 {
            for b in 0..5 {
                if grid[a][b] <= grid[a][b + 1] {
                    ok += 1;
                }
                if grid[b][a] >= grid[b + 1][a] {
                    ok += 1;
                }
            }
        }
        println!("seed {}: {}/60", seed, ok);
    }
}
